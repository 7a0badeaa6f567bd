#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rca/autodiff.hpp"
#include "rca/tensor.hpp"

namespace rca {

/// Shared encoder g, class head h_c (K outputs) and joint head h_j (2K outputs).
struct Arch {
    std::size_t input_dim = 2;
    std::vector<std::size_t> encoder_widths{64, 64};
    std::size_t num_classes = 2;
    double leaky_slope = 0.1;
    // Leaky ReLU after the last encoder layer; off gives a purely linear final layer.
    bool encoder_output_activation = true;
    // Inverted dropout on encoder hidden activations during training only.
    double dropout = 0.0;

    std::size_t feature_dim() const { return encoder_widths.empty() ? input_dim : encoder_widths.back(); }
    void validate() const;
    friend bool operator==(const Arch&, const Arch&) = default;
};

struct Layer {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

enum class ParamGroup { Encoder, ClassHead, JointHead };

inline constexpr std::array<ParamGroup, 3> kAllGroups{ParamGroup::Encoder, ParamGroup::ClassHead,
                                                      ParamGroup::JointHead};

const char* group_name(ParamGroup group);

struct ParamSet {
    Arch arch;
    std::vector<Layer> encoder;
    std::vector<Layer> class_head;
    std::vector<Layer> joint_head;

    std::vector<Layer>& group(ParamGroup g);
    const std::vector<Layer>& group(ParamGroup g) const;
    std::size_t parameter_count() const;

    /// Same architecture, every tensor zero.
    static ParamSet zeros_like(const ParamSet& other);
    friend bool operator==(const ParamSet& a, const ParamSet& b);
};

/// Glorot-uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases.
ParamSet init_params(const Arch& arch, std::uint64_t seed);

/// Row-wise softmax output of a head together with its logits.
struct Prediction {
    Tensor logits;
    Tensor probs;
};

Tensor encode(const ParamSet& params, const Tensor& x);
Prediction class_predict(const ParamSet& params, const Tensor& z);
Prediction joint_predict(const ParamSet& params, const Tensor& z);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);
/// One-hot of the argmax of a K-simplex vector.
std::vector<double> pseudo_label(std::span<const double> probs);
/// Row-wise pseudo_label of a batch of probabilities.
Tensor pseudo_labels(const Tensor& probs);

// Graph construction -------------------------------------------------------

struct LayerVars {
    ad::Var weight;
    ad::Var bias;
};

struct BoundParams {
    std::vector<LayerVars> encoder;
    std::vector<LayerVars> class_head;
    std::vector<LayerVars> joint_head;

    const std::vector<LayerVars>& group(ParamGroup g) const;
};

/// Which groups are differentiable leaves on a tape; the rest become constants.
struct GroupMask {
    bool encoder = true;
    bool class_head = true;
    bool joint_head = true;

    bool contains(ParamGroup g) const;
    static GroupMask none() { return {false, false, false}; }
    static GroupMask only(ParamGroup g);
};

/// Leaf names are "<group>.<layer>.weight" and "<group>.<layer>.bias",
/// optionally prefixed.
BoundParams bind(ad::Tape& tape, const ParamSet& params, GroupMask trainable, const std::string& prefix = "");

/// Encoder graph; `dropout_rng` enables dropout when the arch asks for it.
ad::Var encode(const BoundParams& bound, const Arch& arch, ad::Var x, std::mt19937_64* dropout_rng = nullptr);
/// Linear head logits.
ad::Var head_logits(const std::vector<LayerVars>& head, ad::Var z);

/// Gradients of the bound leaves, laid out like `params`. Groups that were not
/// trainable come back as zeros.
ParamSet collect_gradients(const ad::Gradients& grads, const BoundParams& bound, const ParamSet& params,
                           GroupMask trainable);

// Persistence --------------------------------------------------------------

/// "CALN1", then little-endian int64 arch fields (input_dim, num_classes,
/// encoder_output_activation, n_layers, widths...), then little-endian
/// float64 values in group order encoder, class_head, joint_head; each layer
/// writes its weight (row-major) then its bias.
void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace rca
