#include "rca/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rca {

const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

std::size_t Dataset::num_classes() const {
    if (!labels) throw std::logic_error("dataset '" + name + "' has no labels");
    return labels->cols();
}

std::vector<std::size_t> Dataset::class_indices() const {
    if (!labels) throw std::logic_error("dataset '" + name + "' has no labels");
    std::vector<std::size_t> out(size());
    for (std::size_t r = 0; r < size(); ++r) {
        auto row = labels->row(r);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = features.gather_rows(rows);
    if (labels) out.labels = labels->gather_rows(rows);
    out.domain = domain;
    out.name = name;
    return out;
}

Dataset Dataset::without_labels() const {
    Dataset out = *this;
    out.labels.reset();
    return out;
}

void Dataset::validate() const {
    if (features.rank() != 2 || features.rows() < 1) throw std::invalid_argument("dataset needs an n x d feature matrix");
    if (!features.all_finite()) throw std::invalid_argument("dataset '" + name + "' has non-finite features");
    if (labels) {
        if (labels->rows() != features.rows())
            throw std::invalid_argument("dataset '" + name + "': label rows differ from feature rows");
        for (std::size_t r = 0; r < labels->rows(); ++r) {
            std::size_t ones = 0;
            for (double v : labels->row(r)) {
                if (v == 1.0)
                    ++ones;
                else if (v != 0.0)
                    throw std::invalid_argument("dataset '" + name + "': label row " + std::to_string(r) + " is not one-hot");
            }
            if (ones != 1)
                throw std::invalid_argument("dataset '" + name + "': label row " + std::to_string(r) + " is not one-hot");
        }
    }
}

Tensor one_hot(std::span<const std::size_t> classes, std::size_t num_classes) {
    Tensor out({classes.size(), num_classes});
    for (std::size_t r = 0; r < classes.size(); ++r) {
        if (classes[r] >= num_classes) throw std::out_of_range("class index out of range");
        out(r, classes[r]) = 1.0;
    }
    return out;
}

void ShiftSpec::validate(std::size_t dim, std::size_t num_classes) const {
    if (rotation != 0.0 && dim != 2)
        throw std::invalid_argument("rotation is defined for 2-D features only, got d=" + std::to_string(dim));
    if (!translation.empty() && translation.size() != dim)
        throw std::invalid_argument("translation length differs from feature dimension");
    if (!scale.empty()) {
        if (scale.size() != dim) throw std::invalid_argument("scale length differs from feature dimension");
        for (double s : scale)
            if (s == 0.0 || !std::isfinite(s)) throw std::invalid_argument("scale entries must be finite and nonzero");
    }
    if (!permutation.empty()) {
        if (permutation.size() != num_classes)
            throw std::invalid_argument("label permutation length differs from class count");
        std::vector<bool> seen(num_classes, false);
        for (auto p : permutation) {
            if (p >= num_classes || seen[p]) throw std::invalid_argument("label permutation is not a bijection");
            seen[p] = true;
        }
    }
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be nonnegative");
}

Dataset gen_moons(std::size_t n, double noise_std, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_moons needs n >= 2");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("gen_moons needs noise_std >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);

    const std::size_t n0 = (n + 1) / 2;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    Tensor x({n, 2});
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = order[i];
        const double t = angle(rng);
        if (i < n0) {
            x(r, 0) = std::cos(t);
            x(r, 1) = std::sin(t);
            classes[r] = 0;
        } else {
            x(r, 0) = 1.0 - std::cos(t);
            x(r, 1) = 0.5 - std::sin(t);
            classes[r] = 1;
        }
        if (noise_std > 0.0) {
            x(r, 0) += noise_std * noise(rng);
            x(r, 1) += noise_std * noise(rng);
        }
    }
    return Dataset{std::move(x), one_hot(classes, 2), Domain::Source, "moons"};
}

Dataset gen_blobs(std::size_t n, std::size_t num_classes, std::size_t dim, double separation,
                  std::uint64_t seed, double noise_std) {
    if (num_classes < 2) throw std::invalid_argument("gen_blobs needs K >= 2");
    if (!(separation > 0.0)) throw std::invalid_argument("gen_blobs needs separation > 0");
    if (dim + 1 < num_classes) throw std::invalid_argument("gen_blobs needs dim >= K - 1");
    if (n < 1) throw std::invalid_argument("gen_blobs needs n >= 1");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("gen_blobs needs noise_std >= 0");

    // Vertices s/sqrt(2) e_k of R^K expressed in the orthonormal Helmert basis
    // of the sum-zero hyperplane, so pairwise distances stay `separation`.
    const double a = separation / std::sqrt(2.0);
    std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
    for (std::size_t k = 0; k < num_classes; ++k)
        for (std::size_t j = 1; j < num_classes; ++j) {
            const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
            double coord = 0.0;
            if (k < j)
                coord = a / norm;
            else if (k == j)
                coord = -a * static_cast<double>(j) / norm;
            means[k][j - 1] = coord;
        }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    Tensor x({n, dim});
    std::vector<std::size_t> classes(n);
    for (std::size_t r = 0; r < n; ++r) {
        classes[r] = r % num_classes;
        for (std::size_t c = 0; c < dim; ++c) x(r, c) = means[classes[r]][c] + (noise_std > 0.0 ? noise(rng) : 0.0);
    }
    return Dataset{std::move(x), one_hot(classes, num_classes), Domain::Source, "blobs"};
}

Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec, std::uint64_t seed) {
    const std::size_t d = ds.dim();
    spec.validate(d, ds.labels ? ds.num_classes() : spec.permutation.size());
    if (!spec.permutation.empty() && !ds.labels) throw std::invalid_argument("label permutation on unlabeled dataset");

    Dataset out = ds;
    out.domain = Domain::Target;
    Tensor& x = out.features;
    if (!spec.scale.empty())
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) x(r, c) *= spec.scale[c];
    if (spec.rotation != 0.0) {
        const double cs = std::cos(spec.rotation), sn = std::sin(spec.rotation);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double u = x(r, 0), v = x(r, 1);
            x(r, 0) = cs * u - sn * v;
            x(r, 1) = sn * u + cs * v;
        }
    }
    if (!spec.translation.empty())
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                if (spec.translation[c] != 0.0) x(r, c) += spec.translation[c];
    if (spec.noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (auto& v : x.data()) v += noise(rng);
    }
    if (!spec.permutation.empty()) {
        auto classes = ds.class_indices();
        for (auto& c : classes) c = spec.permutation[c];
        out.labels = one_hot(classes, ds.num_classes());
    }
    return out;
}

Dataset standardize(const Dataset& ds) {
    const std::size_t d = ds.dim();
    if (d < 2) throw std::invalid_argument("standardize needs at least 2 features per row");
    Dataset out = ds;
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.features.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        if (var < 1e-12) {
            std::fill(row.begin(), row.end(), 0.0);
            continue;
        }
        const double sd = std::sqrt(var);
        for (auto& v : row) v = (v - mean) / sd;
    }
    return out;
}

double median_nn_distance(const Tensor& features) {
    const std::size_t n = features.rows();
    if (n < 2) throw std::invalid_argument("median_nn_distance needs at least 2 rows");
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            auto a = features.row(i), b = features.row(j);
            for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
            nearest[i] = std::min(nearest[i], d2);
            nearest[j] = std::min(nearest[j], d2);
        }
    auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(nearest.begin(), mid, nearest.end());
    double med = *mid;
    if (n % 2 == 0) med = 0.5 * (med + *std::max_element(nearest.begin(), mid));
    return std::sqrt(med);
}

BatchStream::Side::Side(std::size_t rows, std::mt19937_64 rng) : rows_(rows), rng_(std::move(rng)) {
    if (rows == 0) throw std::invalid_argument("cannot batch an empty dataset");
    reshuffle({});
}

void BatchStream::Side::reshuffle(std::span<const std::size_t> pending) {
    order_.resize(rows_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    // Rows already in the partially filled batch go to the back of the new epoch.
    if (!pending.empty())
        std::stable_partition(order_.begin(), order_.end(), [&](std::size_t idx) {
            return std::find(pending.begin(), pending.end(), idx) == pending.end();
        });
    cursor_ = 0;
}

std::vector<std::size_t> BatchStream::Side::take(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        if (cursor_ == order_.size()) reshuffle(out);
        out.push_back(order_[cursor_++]);
    }
    return out;
}

BatchStream::BatchStream(std::size_t source_rows, std::size_t target_rows, std::size_t batch_size,
                         std::uint64_t seed)
    : batch_size_(batch_size),
      source_(source_rows, std::mt19937_64(seed)),
      target_(target_rows, std::mt19937_64(seed ^ 0x9e3779b97f4a7c15ULL)) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> BatchStream::next() {
    auto s = source_.take(batch_size_);
    auto t = target_.take(batch_size_);
    return {std::move(s), std::move(t)};
}

Dataset load_csv(const std::filesystem::path& path, bool has_labels, std::size_t num_classes, Domain domain) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    if (has_labels && num_classes < 2) throw std::invalid_argument("labeled CSV needs K >= 2");

    std::vector<double> values;
    std::vector<std::size_t> classes;
    std::size_t width = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cell = b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1);
            double v = 0.0;
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            if (*first == '+') ++first;
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + cell +
                                         "' as a number");
            cells.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        std::size_t features = cells.size();
        if (has_labels) {
            if (cells.size() < 2)
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected features and a label");
            const double label = cells.back();
            if (label != std::floor(label) || label < 0 || label >= static_cast<double>(num_classes))
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": label " +
                                         std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
            classes.push_back(static_cast<std::size_t>(label));
            --features;
        }
        if (rows == 0)
            width = features;
        else if (features != width)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(width) + " features, got " + std::to_string(features));
        values.insert(values.end(), cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(features));
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(path.string() + ": no data rows");
    Dataset ds;
    ds.features = Tensor({rows, width}, std::move(values));
    if (has_labels) ds.labels = one_hot(classes, num_classes);
    ds.domain = domain;
    ds.name = path.stem().string();
    return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    std::vector<std::size_t> classes;
    if (ds.labels) classes = ds.class_indices();
    char buf[32];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto row = ds.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", row[c]);
            if (c) out << ',';
            out << buf;
        }
        if (ds.labels) out << ',' << classes[r];
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace rca
