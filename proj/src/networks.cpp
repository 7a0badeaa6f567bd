#include "rca/networks.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rca {

namespace {

constexpr char kMagic[5] = {'C', 'A', 'L', 'N', '1'};

std::vector<Layer> make_layers(const std::vector<std::size_t>& dims) {
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers.push_back({Tensor({dims[i], dims[i + 1]}), Tensor({1, dims[i + 1]})});
    return layers;
}

std::vector<std::size_t> encoder_dims(const Arch& arch) {
    std::vector<std::size_t> dims{arch.input_dim};
    dims.insert(dims.end(), arch.encoder_widths.begin(), arch.encoder_widths.end());
    return dims;
}

void glorot(std::vector<Layer>& layers, std::mt19937_64& rng) {
    for (auto& layer : layers) {
        const double fan_in = static_cast<double>(layer.weight.rows());
        const double fan_out = static_cast<double>(layer.weight.cols());
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        for (auto& w : layer.weight.data()) w = dist(rng);
    }
}

Tensor apply_layers(const std::vector<Layer>& layers, const Tensor& x, double slope, bool activate_last) {
    ad::Tape tape;
    ad::Var h = tape.constant(x);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = tape.add_row(tape.matmul(h, tape.constant(layers[i].weight)), tape.constant(layers[i].bias));
        if (i + 1 < layers.size() || activate_last) h = tape.leaky_relu(h, slope);
    }
    return h.value();
}

Prediction predict_head(const std::vector<Layer>& head, const Tensor& z, std::size_t expected_dim,
                        std::size_t outputs) {
    if (z.cols() != expected_dim)
        throw ad::ShapeError("head expects " + std::to_string(expected_dim) + " features, got " +
                             std::to_string(z.cols()));
    Prediction p;
    p.logits = apply_layers(head, z, 0.0, false);
    if (p.logits.cols() != outputs) throw std::logic_error("head output width mismatch");
    ad::Tape tape;
    p.probs = tape.softmax(tape.constant(p.logits)).value();
    return p;
}

void write_i64(std::ostream& out, std::int64_t v) {
    std::uint64_t u = static_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_f64(std::ostream& out, double v) { write_i64(out, std::bit_cast<std::int64_t>(v)); }

std::int64_t read_i64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("parameter file truncated");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return static_cast<std::int64_t>(u);
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_i64(in)); }

}  // namespace

void Arch::validate() const {
    if (input_dim == 0) throw std::invalid_argument("arch: input_dim must be positive");
    if (num_classes < 2) throw std::invalid_argument("arch: num_classes must be at least 2");
    for (auto w : encoder_widths)
        if (w == 0) throw std::invalid_argument("arch: encoder widths must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("arch: dropout must be in [0, 1)");
}

const char* group_name(ParamGroup group) {
    switch (group) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::ClassHead: return "class_head";
        case ParamGroup::JointHead: return "joint_head";
    }
    return "?";
}

std::vector<Layer>& ParamSet::group(ParamGroup g) {
    return const_cast<std::vector<Layer>&>(static_cast<const ParamSet*>(this)->group(g));
}

const std::vector<Layer>& ParamSet::group(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Encoder: return encoder;
        case ParamGroup::ClassHead: return class_head;
        case ParamGroup::JointHead: return joint_head;
    }
    throw std::logic_error("bad group");
}

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (auto g : kAllGroups)
        for (const auto& l : group(g)) n += l.weight.size() + l.bias.size();
    return n;
}

ParamSet ParamSet::zeros_like(const ParamSet& other) {
    ParamSet out = other;
    for (auto g : kAllGroups)
        for (auto& l : out.group(g)) {
            l.weight = Tensor::zeros_like(l.weight);
            l.bias = Tensor::zeros_like(l.bias);
        }
    return out;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
    if (!(a.arch == b.arch)) return false;
    for (auto g : kAllGroups) {
        const auto& la = a.group(g);
        const auto& lb = b.group(g);
        if (la.size() != lb.size()) return false;
        for (std::size_t i = 0; i < la.size(); ++i)
            if (!(la[i].weight == lb[i].weight) || !(la[i].bias == lb[i].bias)) return false;
    }
    return true;
}

ParamSet init_params(const Arch& arch, std::uint64_t seed) {
    arch.validate();
    ParamSet p;
    p.arch = arch;
    p.encoder = make_layers(encoder_dims(arch));
    p.class_head = make_layers({arch.feature_dim(), arch.num_classes});
    p.joint_head = make_layers({arch.feature_dim(), 2 * arch.num_classes});
    std::mt19937_64 rng(seed);
    glorot(p.encoder, rng);
    glorot(p.class_head, rng);
    glorot(p.joint_head, rng);
    return p;
}

Tensor encode(const ParamSet& params, const Tensor& x) {
    if (x.cols() != params.arch.input_dim)
        throw ad::ShapeError("encoder expects " + std::to_string(params.arch.input_dim) + " input columns, got " +
                             std::to_string(x.cols()));
    return apply_layers(params.encoder, x, params.arch.leaky_slope, params.arch.encoder_output_activation);
}

Prediction class_predict(const ParamSet& params, const Tensor& z) {
    return predict_head(params.class_head, z, params.arch.feature_dim(), params.arch.num_classes);
}

Prediction joint_predict(const ParamSet& params, const Tensor& z) {
    return predict_head(params.joint_head, z, params.arch.feature_dim(), 2 * params.arch.num_classes);
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::vector<double> pseudo_label(std::span<const double> probs) {
    std::vector<double> out(probs.size(), 0.0);
    out[argmax(probs)] = 1.0;
    return out;
}

Tensor pseudo_labels(const Tensor& probs) {
    Tensor out(Shape{probs.rows(), probs.cols()});
    for (std::size_t r = 0; r < probs.rows(); ++r) out(r, argmax(probs.row(r))) = 1.0;
    return out;
}

const std::vector<LayerVars>& BoundParams::group(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Encoder: return encoder;
        case ParamGroup::ClassHead: return class_head;
        case ParamGroup::JointHead: return joint_head;
    }
    throw std::logic_error("bad group");
}

bool GroupMask::contains(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Encoder: return encoder;
        case ParamGroup::ClassHead: return class_head;
        case ParamGroup::JointHead: return joint_head;
    }
    return false;
}

GroupMask GroupMask::only(ParamGroup g) {
    GroupMask m = none();
    switch (g) {
        case ParamGroup::Encoder: m.encoder = true; break;
        case ParamGroup::ClassHead: m.class_head = true; break;
        case ParamGroup::JointHead: m.joint_head = true; break;
    }
    return m;
}

BoundParams bind(ad::Tape& tape, const ParamSet& params, GroupMask trainable, const std::string& prefix) {
    BoundParams bound;
    for (auto g : kAllGroups) {
        auto& dst = const_cast<std::vector<LayerVars>&>(bound.group(g));
        const auto& layers = params.group(g);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string base = prefix + group_name(g) + "." + std::to_string(i);
            if (trainable.contains(g))
                dst.push_back({tape.parameter(base + ".weight", layers[i].weight),
                               tape.parameter(base + ".bias", layers[i].bias)});
            else
                dst.push_back({tape.constant(layers[i].weight), tape.constant(layers[i].bias)});
        }
    }
    return bound;
}

ad::Var encode(const BoundParams& bound, const Arch& arch, ad::Var x, std::mt19937_64* dropout_rng) {
    if (x.value().cols() != arch.input_dim)
        throw ad::ShapeError("encoder expects " + std::to_string(arch.input_dim) + " input columns, got " +
                             std::to_string(x.value().cols()));
    ad::Tape& tape = *x.tape();
    ad::Var h = x;
    for (std::size_t i = 0; i < bound.encoder.size(); ++i) {
        h = tape.add_row(tape.matmul(h, bound.encoder[i].weight), bound.encoder[i].bias);
        const bool last = i + 1 == bound.encoder.size();
        if (!last || arch.encoder_output_activation) h = tape.leaky_relu(h, arch.leaky_slope);
        if (!last && dropout_rng && arch.dropout > 0.0) {
            Tensor mask(h.shape());
            std::bernoulli_distribution keep(1.0 - arch.dropout);
            for (auto& m : mask.data()) m = keep(*dropout_rng) ? 1.0 / (1.0 - arch.dropout) : 0.0;
            h = tape.dropout(h, std::move(mask));
        }
    }
    return h;
}

ad::Var head_logits(const std::vector<LayerVars>& head, ad::Var z) {
    ad::Tape& tape = *z.tape();
    ad::Var h = z;
    for (const auto& layer : head) h = tape.add_row(tape.matmul(h, layer.weight), layer.bias);
    return h;
}

ParamSet collect_gradients(const ad::Gradients& grads, const BoundParams& bound, const ParamSet& params,
                           GroupMask trainable) {
    ParamSet out = ParamSet::zeros_like(params);
    for (auto g : kAllGroups) {
        if (!trainable.contains(g)) continue;
        auto& dst = out.group(g);
        const auto& vars = bound.group(g);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i].weight = grads.wrt(vars[i].weight);
            dst[i].bias = grads.wrt(vars[i].bias);
        }
    }
    return out;
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof kMagic);
    const Arch& a = params.arch;
    write_i64(out, static_cast<std::int64_t>(a.input_dim));
    write_i64(out, static_cast<std::int64_t>(a.num_classes));
    write_i64(out, a.encoder_output_activation ? 1 : 0);
    write_i64(out, static_cast<std::int64_t>(a.encoder_widths.size()));
    for (auto w : a.encoder_widths) write_i64(out, static_cast<std::int64_t>(w));
    for (auto g : kAllGroups)
        for (const auto& layer : params.group(g)) {
            for (double v : layer.weight.data()) write_f64(out, v);
            for (double v : layer.bias.data()) write_f64(out, v);
        }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error(path.string() + " is not a CALN1 parameter file");
    Arch arch;
    auto positive = [&](std::int64_t v, const char* what) {
        if (v <= 0 || v > (1 << 24)) throw std::runtime_error(std::string("parameter file: bad ") + what);
        return static_cast<std::size_t>(v);
    };
    arch.input_dim = positive(read_i64(in), "input_dim");
    arch.num_classes = positive(read_i64(in), "num_classes");
    arch.encoder_output_activation = read_i64(in) != 0;
    const auto n_layers = read_i64(in);
    if (n_layers < 0 || n_layers > 1024) throw std::runtime_error("parameter file: bad layer count");
    arch.encoder_widths.clear();
    for (std::int64_t i = 0; i < n_layers; ++i) arch.encoder_widths.push_back(positive(read_i64(in), "width"));
    arch.validate();

    ParamSet p = init_params(arch, 0);
    for (auto g : kAllGroups)
        for (auto& layer : p.group(g)) {
            for (auto& v : layer.weight.data()) v = read_f64(in);
            for (auto& v : layer.bias.data()) v = read_f64(in);
        }
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("parameter file has trailing bytes");
    return p;
}

}  // namespace rca
