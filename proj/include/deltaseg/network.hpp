#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "deltaseg/attention.hpp"
#include "deltaseg/layers.hpp"

namespace deltaseg {

// Capacity ladder: V1 = SE everywhere + standalone delta operators on skips;
// V2 = SE everywhere + full DDA skips; Full = DDA skips, coordinate attention
// in the decoder and after the ASPP bottleneck, and full-width ASPP branches.
enum class Variant { V1, V2, Full };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
    int num_classes = 7;
    int input_h = 256;
    int input_w = 256;
    std::array<int, 5> encoder_widths{64, 128, 256, 256, 256};
    std::array<int, 5> encoder_dilations{1, 1, 1, 2, 4};
    std::array<int, 3> aspp_rates{6, 12, 18};
    double aspp_dropout = 0.5;
    Variant variant = Variant::Full;
    double width_multiplier = 1.0;
    std::uint64_t seed = 0;
    int se_reduction = 8;
    int ca_reduction = 8;

    void validate() const;
    std::array<int, 5> scaled_widths() const;  // multiplier applied, floor 8
};

template <typename T>
struct ModelOutputsT {
    TensorPtrT<T> primary;                // [N,C,H,W] at input resolution
    std::vector<TensorPtrT<T>> aux;       // dec2..dec4 logits at native resolution; train mode only
};

using ModelOutputs = ModelOutputsT<float>;

// DoubleConv block: two DSC units, each followed by a channel/positional
// attention module.
template <typename T>
struct DoubleConvBlockT {
    enum class Att { SE, CA };
    Att att = Att::SE;
    DSCUnitT<T> dsc1, dsc2;
    SEModuleT<T> se1, se2;
    CoordAttModuleT<T> ca1, ca2;

    DoubleConvBlockT() = default;
    DoubleConvBlockT(int c_in, int c_out, int dilation, Att att, int se_r, int ca_r, std::mt19937_64& rng);

    TensorPtrT<T> forward(const TensorPtrT<T>& x);
    void set_training(bool t);
    void collect(const std::string& prefix, ParamListT<T>& out);
};

// ASPP bottleneck: 1x1 branch, three 3x3 atrous branches, a pooled branch,
// concat to 5x channels and a projection conv with dropout. The atrous
// branches are full convolutions in the Full variant and depthwise separable
// in the reduced variants.
template <typename T>
struct ASPPT {
    int channels = 0;
    bool full_branches = true;
    std::array<int, 3> rates{6, 12, 18};

    Conv2dLayerT<T> b0_conv;
    BatchNorm2dLayerT<T> b0_bn;
    struct Atrous {
        bool full = true;
        Conv2dLayerT<T> conv;      // full 3x3
        BatchNorm2dLayerT<T> bn;
        Conv2dLayerT<T> dw;        // separable pair
        BatchNorm2dLayerT<T> bn_dw;
        Conv2dLayerT<T> pw;
        BatchNorm2dLayerT<T> bn_pw;
    };
    std::array<Atrous, 3> atrous;
    Conv2dLayerT<T> pool_conv;
    BatchNorm2dLayerT<T> pool_bn;
    Conv2dLayerT<T> project;
    BatchNorm2dLayerT<T> project_bn;
    DropoutLayerT<T> drop;

    ASPPT() = default;
    ASPPT(int channels, std::array<int, 3> rates, bool full_branches, double dropout_p, std::mt19937_64& rng,
          std::mt19937_64* dropout_rng);

    TensorPtrT<T> forward(const TensorPtrT<T>& x);
    void set_training(bool t);
    void collect(const std::string& prefix, ParamListT<T>& out);
};

template <typename T>
class DeltaSegModelT {
  public:
    explicit DeltaSegModelT(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    bool training() const { return training_; }
    void set_training(bool t);

    ModelOutputsT<T> forward(const TensorPtrT<T>& x);

    std::vector<TensorPtrT<T>> encoder_forward(const TensorPtrT<T>& x);
    TensorPtrT<T> aspp_forward(const TensorPtrT<T>& f5);
    ModelOutputsT<T> decoder_forward(const TensorPtrT<T>& bottleneck, const std::vector<TensorPtrT<T>>& skips);

    ParamListT<T> params();

    struct ParamCount {
        std::int64_t total = 0;
        std::vector<std::pair<std::string, std::int64_t>> by_module;
    };
    ParamCount count_params();

  private:
    ModelConfig cfg_;
    bool training_ = false;
    std::mt19937_64 dropout_rng_;

    std::array<DoubleConvBlockT<T>, 5> stages_;
    ASPPT<T> aspp_;
    std::unique_ptr<CoordAttModuleT<T>> bottleneck_ca_;       // Full only
    std::array<std::unique_ptr<DDAModuleT<T>>, 4> dda_;      // Full / V2
    std::array<std::unique_ptr<DeltaOperatorT<T>>, 4> delta_;  // V1
    Conv2dLayerT<T> up2_, up1_;  // transposed 2x2 stride 2
    std::array<DoubleConvBlockT<T>, 4> dec_;  // dec1..dec4 at [0..3]
    std::array<Conv2dLayerT<T>, 4> heads_;    // dec1..dec4

    TensorPtrT<T> refine_skip(int level, const TensorPtrT<T>& f_enc, const TensorPtrT<T>& f_adj,
                              const TensorPtrT<T>& f_dec);
};

using DeltaSegModel = DeltaSegModelT<float>;

// Single-file checkpoint: versioned JSON header (config plus entry table)
// followed by raw float32 payload. Loading rebuilds the model from the stored
// config and validates that entry names and shapes match exactly.
void save_checkpoint(DeltaSegModelT<float>& model, const std::string& path);
std::unique_ptr<DeltaSegModelT<float>> load_checkpoint(const std::string& path);

}  // namespace deltaseg
