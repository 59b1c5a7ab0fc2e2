#pragma once

#include <memory>
#include <optional>

#include "deltaseg/layers.hpp"

namespace deltaseg {

// Squeeze-and-Excitation channel gate: s = sigmoid(W2 relu(W1 gap(F))),
// bottleneck width max(C/r, 8).
template <typename T>
struct SEModuleT {
    int channels = 0;
    int bottleneck = 0;
    Conv2dLayerT<T> w1;  // C -> bottleneck, 1x1, bias
    Conv2dLayerT<T> w2;  // bottleneck -> C, 1x1, bias

    SEModuleT() = default;
    SEModuleT(int channels, int reduction, std::mt19937_64& rng);

    TensorPtrT<T> forward(const TensorPtrT<T>& f) const;
    void collect(const std::string& prefix, ParamListT<T>& out) const;
};

// Coordinate Attention: directional average pooling along H and W, a shared
// compress conv over the concatenated C x (H+W) descriptor, then separate
// expand convs producing gates a_h [C,H,1] and a_w [C,1,W].
template <typename T>
struct CoordAttModuleT {
    int channels = 0;
    int mid = 0;  // max(C/r, 8)
    Conv2dLayerT<T> compress;  // C -> mid, 1x1, no bias
    BatchNorm2dLayerT<T> bn;
    Conv2dLayerT<T> expand_h;  // mid -> C, 1x1, bias
    Conv2dLayerT<T> expand_w;

    CoordAttModuleT() = default;
    CoordAttModuleT(int channels, int reduction, std::mt19937_64& rng);

    // (a_h [N,C,H,1], a_w [N,C,1,W])
    std::pair<TensorPtrT<T>, TensorPtrT<T>> attention_maps(const TensorPtrT<T>& f);
    TensorPtrT<T> forward(const TensorPtrT<T>& f);
    void set_training(bool t) { bn.training = t; }
    void collect(const std::string& prefix, ParamListT<T>& out);
};

// Deep Delta Learning operator: per sample, a unit direction k and a strength
// beta in [0,2] derived from gap(F); every pixel vector f is mapped to
// f - beta (f.k) k. forced_beta overrides the strength branch (test hook).
template <typename T>
struct DeltaOperatorT {
    int channels = 0;
    int hidden = 0;  // max(C/4, 8)
    Conv2dLayerT<T> dir1, dir2;  // direction MLP
    Conv2dLayerT<T> str1, str2;  // strength MLP (final width 1)
    std::optional<T> forced_beta;

    DeltaOperatorT() = default;
    DeltaOperatorT(int channels, std::mt19937_64& rng);

    TensorPtrT<T> direction(const TensorPtrT<T>& f) const;  // k, [N,C,1,1]
    TensorPtrT<T> strength(const TensorPtrT<T>& f) const;   // beta, [N,1,1,1]
    TensorPtrT<T> forward(const TensorPtrT<T>& f) const;
    void collect(const std::string& prefix, ParamListT<T>& out) const;
};

// Decoder-conditioned spatial gate. Projects encoder and decoder features to a
// shared width with 3x3 convs (stride 2 on the encoder side when the encoder
// resolution is twice the decoder's), sums, PReLU, 1x1 to a single-channel
// sigmoid map alpha. alpha is upsampled by a learnable 2x2 stride-2 transposed
// conv before gating when resolutions differ.
template <typename T>
struct AttentionGateT {
    int enc_channels = 0;
    int dec_channels = 0;
    int width = 0;  // shared projection width (= enc_channels)
    bool strided = false;
    Conv2dLayerT<T> enc_proj;
    Conv2dLayerT<T> dec_proj;
    PReLULayerT<T> act;
    Conv2dLayerT<T> psi;       // width -> 1
    Conv2dLayerT<T> upsample;  // 1 -> 1, 2x2 stride 2 transposed; only when strided

    AttentionGateT() = default;
    AttentionGateT(int enc_channels, int dec_channels, bool strided, std::mt19937_64& rng);

    // returns (gated features, alpha at gating resolution)
    std::pair<TensorPtrT<T>, TensorPtrT<T>> forward(const TensorPtrT<T>& f_fused, const TensorPtrT<T>& g) const;
    void collect(const std::string& prefix, ParamListT<T>& out) const;
};

// Deep Delta Attention skip module: multi-scale fusion of the skip feature
// with its higher-resolution encoder neighbour, then parallel delta and
// attention-gate paths combined by a 1x1 projection.
template <typename T>
struct DDAModuleT {
    int channels = 0;       // C of the skip feature
    int adj_channels = 0;   // 0 when the module has no multi-scale input
    int dec_channels = 0;
    bool adj_same_resolution = false;  // deep dilated stages: identity alignment
    bool gate_strided = false;
    Conv2dLayerT<T> fuse;  // (C + C') -> C, 1x1; only when adj_channels > 0
    BatchNorm2dLayerT<T> fuse_bn;
    DeltaOperatorT<T> delta;
    AttentionGateT<T> gate;
    Conv2dLayerT<T> combine;  // 2C -> C, 1x1
    BatchNorm2dLayerT<T> combine_bn;

    DDAModuleT() = default;
    DDAModuleT(int channels, int adj_channels, int dec_channels, bool adj_same_resolution, bool gate_strided,
               std::mt19937_64& rng);

    bool has_multiscale() const { return adj_channels > 0; }
    TensorPtrT<T> forward(const TensorPtrT<T>& f_enc, const TensorPtrT<T>& f_enc_adj, const TensorPtrT<T>& f_dec);
    void set_training(bool t);
    void collect(const std::string& prefix, ParamListT<T>& out);
};

}  // namespace deltaseg
