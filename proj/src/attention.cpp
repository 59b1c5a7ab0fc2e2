#include "deltaseg/attention.hpp"

#include <algorithm>
#include <stdexcept>

namespace deltaseg {

namespace {

void check_channels(const char* who, const std::vector<int>& shape, int expected) {
    if (shape.size() != 4 || shape[1] != expected)
        throw std::invalid_argument(std::string(who) + ": input channel count " +
                                    (shape.size() == 4 ? std::to_string(shape[1]) : shape_str(shape)) +
                                    " does not match module channels " + std::to_string(expected));
}

ConvSpec conv1x1(int c_in, int c_out) {
    ConvSpec s;
    s.in_channels = c_in;
    s.out_channels = c_out;
    s.kernel = 1;
    return s;
}

}  // namespace

template <typename T>
SEModuleT<T>::SEModuleT(int channels_, int reduction, std::mt19937_64& rng)
    : channels(channels_), bottleneck(std::max(channels_ / reduction, 8)) {
    w1 = Conv2dLayerT<T>(conv1x1(channels, bottleneck), true, rng);
    w2 = Conv2dLayerT<T>(conv1x1(bottleneck, channels), true, rng);
}

template <typename T>
TensorPtrT<T> SEModuleT<T>::forward(const TensorPtrT<T>& f) const {
    check_channels("se_forward", f->shape, channels);
    auto z = global_avg_pool(f);
    auto s = sigmoid(w2.forward(relu(w1.forward(z))));
    return mul(f, s);
}

template <typename T>
void SEModuleT<T>::collect(const std::string& prefix, ParamListT<T>& out) const {
    w1.collect(prefix + ".w1", out);
    w2.collect(prefix + ".w2", out);
}

template <typename T>
CoordAttModuleT<T>::CoordAttModuleT(int channels_, int reduction, std::mt19937_64& rng)
    : channels(channels_), mid(std::max(channels_ / reduction, 8)) {
    compress = Conv2dLayerT<T>(conv1x1(channels, mid), false, rng);
    bn = BatchNorm2dLayerT<T>(mid);
    expand_h = Conv2dLayerT<T>(conv1x1(mid, channels), true, rng);
    expand_w = Conv2dLayerT<T>(conv1x1(mid, channels), true, rng);
}

template <typename T>
std::pair<TensorPtrT<T>, TensorPtrT<T>> CoordAttModuleT<T>::attention_maps(const TensorPtrT<T>& f) {
    check_channels("coord_att_forward", f->shape, channels);
    const int h = f->dim(2), w = f->dim(3);
    auto z_h = reduce_mean(f, {3});                 // [N,C,H,1]
    auto z_w = permute_hw(reduce_mean(f, {2}));     // [N,C,W,1]
    auto joint = concat<T>({z_h, z_w}, 2);          // [N,C,H+W,1]
    auto y = relu6(bn.forward(compress.forward(joint)));
    auto f_h = slice(y, 2, 0, h);
    auto f_w = permute_hw(slice(y, 2, h, w));       // [N,mid,1,W]
    auto a_h = sigmoid(expand_h.forward(f_h));      // [N,C,H,1]
    auto a_w = sigmoid(expand_w.forward(f_w));      // [N,C,1,W]
    return {a_h, a_w};
}

template <typename T>
TensorPtrT<T> CoordAttModuleT<T>::forward(const TensorPtrT<T>& f) {
    auto [a_h, a_w] = attention_maps(f);
    return mul(mul(f, a_h), a_w);
}

template <typename T>
void CoordAttModuleT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    compress.collect(prefix + ".compress", out);
    bn.collect(prefix + ".bn", out);
    expand_h.collect(prefix + ".expand_h", out);
    expand_w.collect(prefix + ".expand_w", out);
}

template <typename T>
DeltaOperatorT<T>::DeltaOperatorT(int channels_, std::mt19937_64& rng)
    : channels(channels_), hidden(std::max(channels_ / 4, 8)) {
    dir1 = Conv2dLayerT<T>(conv1x1(channels, hidden), true, rng);
    dir2 = Conv2dLayerT<T>(conv1x1(hidden, channels), true, rng);
    str1 = Conv2dLayerT<T>(conv1x1(channels, hidden), true, rng);
    str2 = Conv2dLayerT<T>(conv1x1(hidden, 1), true, rng);
}

template <typename T>
TensorPtrT<T> DeltaOperatorT<T>::direction(const TensorPtrT<T>& f) const {
    auto v = dir2.forward(relu(dir1.forward(global_avg_pool(f))));
    return normalize_channels(v, T(1e-8));
}

template <typename T>
TensorPtrT<T> DeltaOperatorT<T>::strength(const TensorPtrT<T>& f) const {
    if (forced_beta) return TensorT<T>::full({f->dim(0), 1, 1, 1}, *forced_beta);
    auto b = sigmoid(str2.forward(relu(str1.forward(global_avg_pool(f)))));
    return mul_scalar(b, T(2));
}

template <typename T>
TensorPtrT<T> DeltaOperatorT<T>::forward(const TensorPtrT<T>& f) const {
    check_channels("delta_forward", f->shape, channels);
    auto k = direction(f);                       // [N,C,1,1], unit norm
    auto beta = strength(f);                     // [N,1,1,1]
    auto coef = reduce_sum(mul(f, k), {1});      // per-pixel f.k, [N,1,H,W]
    return sub(f, mul(mul(coef, k), beta));
}

template <typename T>
void DeltaOperatorT<T>::collect(const std::string& prefix, ParamListT<T>& out) const {
    dir1.collect(prefix + ".dir1", out);
    dir2.collect(prefix + ".dir2", out);
    str1.collect(prefix + ".str1", out);
    str2.collect(prefix + ".str2", out);
}

template <typename T>
AttentionGateT<T>::AttentionGateT(int enc_channels_, int dec_channels_, bool strided_, std::mt19937_64& rng)
    : enc_channels(enc_channels_), dec_channels(dec_channels_), width(enc_channels_), strided(strided_) {
    ConvSpec e;
    e.in_channels = enc_channels;
    e.out_channels = width;
    e.kernel = 3;
    e.stride = strided ? 2 : 1;
    e.padding = 1;
    enc_proj = Conv2dLayerT<T>(e, true, rng);

    ConvSpec d;
    d.in_channels = dec_channels;
    d.out_channels = width;
    d.kernel = 3;
    d.padding = 1;
    dec_proj = Conv2dLayerT<T>(d, true, rng);

    psi = Conv2dLayerT<T>(conv1x1(width, 1), true, rng);

    if (strided) {
        ConvSpec u;
        u.in_channels = 1;
        u.out_channels = 1;
        u.kernel = 2;
        u.stride = 2;
        u.transposed = true;
        upsample = Conv2dLayerT<T>(u, true, rng);
        // start as plain replication so an untrained gate upsamples smoothly
        std::fill(upsample.weight->data.begin(), upsample.weight->data.end(), T(1));
    }
}

template <typename T>
std::pair<TensorPtrT<T>, TensorPtrT<T>> AttentionGateT<T>::forward(const TensorPtrT<T>& f_fused,
                                                                   const TensorPtrT<T>& g) const {
    check_channels("attention_gate_forward", f_fused->shape, enc_channels);
    check_channels("attention_gate_forward (decoder signal)", g->shape, dec_channels);
    const int he = f_fused->dim(2), we = f_fused->dim(3);
    const int hd = g->dim(2), wd = g->dim(3);
    const bool same = (he == hd && we == wd);
    const bool half = (he == 2 * hd && we == 2 * wd);
    if (!same && !half)
        throw std::invalid_argument("attention_gate_forward: decoder extent " + std::to_string(hd) + "x" +
                                    std::to_string(wd) + " must equal or be exactly half the encoder extent " +
                                    std::to_string(he) + "x" + std::to_string(we));
    if (same == strided)
        throw std::invalid_argument("attention_gate_forward: resolution ratio does not match the configured "
                                    "gate stride");

    auto e = enc_proj.forward(f_fused);
    auto d = dec_proj.forward(g);
    auto alpha = sigmoid(psi.forward(act.forward(add(e, d))));  // [N,1,Hd,Wd]
    TensorPtrT<T> gate_map = strided ? upsample.forward(alpha) : alpha;
    return {mul(f_fused, gate_map), alpha};
}

template <typename T>
void AttentionGateT<T>::collect(const std::string& prefix, ParamListT<T>& out) const {
    enc_proj.collect(prefix + ".enc_proj", out);
    dec_proj.collect(prefix + ".dec_proj", out);
    act.collect(prefix + ".prelu", out);
    psi.collect(prefix + ".psi", out);
    if (strided) upsample.collect(prefix + ".upsample", out);
}

template <typename T>
DDAModuleT<T>::DDAModuleT(int channels_, int adj_channels_, int dec_channels_, bool adj_same_resolution_,
                          bool gate_strided_, std::mt19937_64& rng)
    : channels(channels_),
      adj_channels(adj_channels_),
      dec_channels(dec_channels_),
      adj_same_resolution(adj_same_resolution_),
      gate_strided(gate_strided_) {
    if (adj_channels > 0) {
        fuse = Conv2dLayerT<T>(conv1x1(channels + adj_channels, channels), false, rng);
        fuse_bn = BatchNorm2dLayerT<T>(channels);
    }
    delta = DeltaOperatorT<T>(channels, rng);
    gate = AttentionGateT<T>(channels, dec_channels, gate_strided, rng);
    combine = Conv2dLayerT<T>(conv1x1(2 * channels, channels), false, rng);
    combine_bn = BatchNorm2dLayerT<T>(channels);
}

template <typename T>
TensorPtrT<T> DDAModuleT<T>::forward(const TensorPtrT<T>& f_enc, const TensorPtrT<T>& f_enc_adj,
                                     const TensorPtrT<T>& f_dec) {
    check_channels("dda_forward", f_enc->shape, channels);
    if (!f_dec) throw std::invalid_argument("dda_forward: missing decoder signal");

    TensorPtrT<T> fused = f_enc;
    if (has_multiscale()) {
        if (!f_enc_adj) throw std::invalid_argument("dda_forward: module expects an adjacent encoder feature");
        check_channels("dda_forward (adjacent feature)", f_enc_adj->shape, adj_channels);
        const int h = f_enc->dim(2), w = f_enc->dim(3);
        const int ha = f_enc_adj->dim(2), wa = f_enc_adj->dim(3);
        TensorPtrT<T> aligned;
        if (ha == 2 * h && wa == 2 * w) {
            aligned = pool2d(f_enc_adj, PoolKind::Max, 2, 2);
        } else if (ha == h && wa == w) {
            aligned = f_enc_adj;  // deep dilated stages share the resolution
        } else {
            throw std::invalid_argument("dda_forward: adjacent feature extent " + std::to_string(ha) + "x" +
                                        std::to_string(wa) + " must be 1x or 2x the skip extent " +
                                        std::to_string(h) + "x" + std::to_string(w));
        }
        fused = relu6(fuse_bn.forward(fuse.forward(concat<T>({f_enc, aligned}, 1))));
    } else if (f_enc_adj) {
        throw std::invalid_argument("dda_forward: module was built without multi-scale fusion");
    }

    auto f_delta = delta.forward(fused);
    auto [f_gate, alpha] = gate.forward(fused, f_dec);
    (void)alpha;
    return relu6(combine_bn.forward(combine.forward(concat<T>({f_delta, f_gate}, 1))));
}

template <typename T>
void DDAModuleT<T>::set_training(bool t) {
    if (has_multiscale()) fuse_bn.training = t;
    combine_bn.training = t;
}

template <typename T>
void DDAModuleT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    if (has_multiscale()) {
        fuse.collect(prefix + ".fuse", out);
        fuse_bn.collect(prefix + ".fuse_bn", out);
    }
    delta.collect(prefix + ".delta", out);
    gate.collect(prefix + ".gate", out);
    combine.collect(prefix + ".combine", out);
    combine_bn.collect(prefix + ".combine_bn", out);
}

#define DS_INSTANTIATE_ATTENTION(T)  \
    template struct SEModuleT<T>;    \
    template struct CoordAttModuleT<T>; \
    template struct DeltaOperatorT<T>;  \
    template struct AttentionGateT<T>;  \
    template struct DDAModuleT<T>;

DS_INSTANTIATE_ATTENTION(float)
DS_INSTANTIATE_ATTENTION(double)

}  // namespace deltaseg
