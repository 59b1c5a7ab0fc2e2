#include "deltaseg/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace deltaseg {

Variant parse_variant(const std::string& name) {
    std::string s;
    for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "v1") return Variant::V1;
    if (s == "v2") return Variant::V2;
    if (s == "full") return Variant::Full;
    throw std::invalid_argument("unknown variant '" + name + "' (expected v1, v2 or full)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
        default: return "full";
    }
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("model config: num_classes must be >= 2");
    if (input_h < 8 || input_w < 8) throw std::invalid_argument("model config: input size too small");
    if (input_h % 4 != 0 || input_w % 4 != 0)
        throw std::invalid_argument("model config: input size " + std::to_string(input_h) + "x" +
                                    std::to_string(input_w) + " must be divisible by 4 (two pooling stages)");
    if (width_multiplier <= 0.0) throw std::invalid_argument("model config: width_multiplier must be positive");
    for (int w : encoder_widths)
        if (w <= 0) throw std::invalid_argument("model config: encoder widths must be positive");
    for (int d : encoder_dilations)
        if (d <= 0) throw std::invalid_argument("model config: encoder dilations must be positive");
}

std::array<int, 5> ModelConfig::scaled_widths() const {
    std::array<int, 5> w{};
    for (std::size_t i = 0; i < 5; ++i)
        w[i] = std::max(8, static_cast<int>(std::lround(encoder_widths[i] * width_multiplier)));
    return w;
}

template <typename T>
DoubleConvBlockT<T>::DoubleConvBlockT(int c_in, int c_out, int dilation, Att att_, int se_r, int ca_r,
                                      std::mt19937_64& rng)
    : att(att_), dsc1(c_in, c_out, dilation, rng), dsc2(c_out, c_out, dilation, rng) {
    if (att == Att::SE) {
        se1 = SEModuleT<T>(c_out, se_r, rng);
        se2 = SEModuleT<T>(c_out, se_r, rng);
    } else {
        ca1 = CoordAttModuleT<T>(c_out, ca_r, rng);
        ca2 = CoordAttModuleT<T>(c_out, ca_r, rng);
    }
}

template <typename T>
TensorPtrT<T> DoubleConvBlockT<T>::forward(const TensorPtrT<T>& x) {
    auto h = dsc1.forward(x);
    h = att == Att::SE ? se1.forward(h) : ca1.forward(h);
    h = dsc2.forward(h);
    return att == Att::SE ? se2.forward(h) : ca2.forward(h);
}

template <typename T>
void DoubleConvBlockT<T>::set_training(bool t) {
    dsc1.set_training(t);
    dsc2.set_training(t);
    if (att == Att::CA) {
        ca1.set_training(t);
        ca2.set_training(t);
    }
}

template <typename T>
void DoubleConvBlockT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    dsc1.collect(prefix + ".dsc1", out);
    if (att == Att::SE)
        se1.collect(prefix + ".se1", out);
    else
        ca1.collect(prefix + ".ca1", out);
    dsc2.collect(prefix + ".dsc2", out);
    if (att == Att::SE)
        se2.collect(prefix + ".se2", out);
    else
        ca2.collect(prefix + ".ca2", out);
}

namespace {

ConvSpec spec1x1(int c_in, int c_out) {
    ConvSpec s;
    s.in_channels = c_in;
    s.out_channels = c_out;
    s.kernel = 1;
    return s;
}

}  // namespace

template <typename T>
ASPPT<T>::ASPPT(int channels_, std::array<int, 3> rates_, bool full_branches_, double dropout_p,
                std::mt19937_64& rng, std::mt19937_64* dropout_rng)
    : channels(channels_), full_branches(full_branches_), rates(rates_) {
    b0_conv = Conv2dLayerT<T>(spec1x1(channels, channels), false, rng);
    b0_bn = BatchNorm2dLayerT<T>(channels);
    for (int i = 0; i < 3; ++i) {
        auto& a = atrous[static_cast<std::size_t>(i)];
        a.full = full_branches;
        if (full_branches) {
            ConvSpec s;
            s.in_channels = channels;
            s.out_channels = channels;
            s.kernel = 3;
            s.padding = rates[static_cast<std::size_t>(i)];
            s.dilation = rates[static_cast<std::size_t>(i)];
            a.conv = Conv2dLayerT<T>(s, false, rng);
            a.bn = BatchNorm2dLayerT<T>(channels);
        } else {
            ConvSpec dw;
            dw.in_channels = channels;
            dw.out_channels = channels;
            dw.kernel = 3;
            dw.padding = rates[static_cast<std::size_t>(i)];
            dw.dilation = rates[static_cast<std::size_t>(i)];
            dw.groups = channels;
            a.dw = Conv2dLayerT<T>(dw, false, rng);
            a.bn_dw = BatchNorm2dLayerT<T>(channels);
            a.pw = Conv2dLayerT<T>(spec1x1(channels, channels), false, rng);
            a.bn_pw = BatchNorm2dLayerT<T>(channels);
        }
    }
    pool_conv = Conv2dLayerT<T>(spec1x1(channels, channels), false, rng);
    pool_bn = BatchNorm2dLayerT<T>(channels);
    project = Conv2dLayerT<T>(spec1x1(5 * channels, channels), false, rng);
    project_bn = BatchNorm2dLayerT<T>(channels);
    drop.p = dropout_p;
    drop.rng = dropout_rng;
}

template <typename T>
TensorPtrT<T> ASPPT<T>::forward(const TensorPtrT<T>& x) {
    const int h = x->dim(2), w = x->dim(3);
    std::vector<TensorPtrT<T>> branches;
    branches.push_back(relu(b0_bn.forward(b0_conv.forward(x))));
    for (auto& a : atrous) {
        if (a.full) {
            branches.push_back(relu(a.bn.forward(a.conv.forward(x))));
        } else {
            auto t = relu(a.bn_dw.forward(a.dw.forward(x)));
            branches.push_back(relu(a.bn_pw.forward(a.pw.forward(t))));
        }
    }
    auto pooled = relu(pool_bn.forward(pool_conv.forward(global_avg_pool(x))));
    branches.push_back(resize_bilinear(pooled, h, w));
    auto cat = concat<T>(branches, 1);
    auto proj = relu(project_bn.forward(project.forward(cat)));
    return drop.forward(proj);
}

template <typename T>
void ASPPT<T>::set_training(bool t) {
    b0_bn.training = t;
    for (auto& a : atrous) {
        a.bn.training = t;
        a.bn_dw.training = t;
        a.bn_pw.training = t;
    }
    pool_bn.training = t;
    project_bn.training = t;
    drop.training = t;
}

template <typename T>
void ASPPT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    b0_conv.collect(prefix + ".b0.conv", out);
    b0_bn.collect(prefix + ".b0.bn", out);
    for (int i = 0; i < 3; ++i) {
        auto& a = atrous[static_cast<std::size_t>(i)];
        const std::string p = prefix + ".b" + std::to_string(i + 1);
        if (a.full) {
            a.conv.collect(p + ".conv", out);
            a.bn.collect(p + ".bn", out);
        } else {
            a.dw.collect(p + ".depthwise", out);
            a.bn_dw.collect(p + ".bn_dw", out);
            a.pw.collect(p + ".pointwise", out);
            a.bn_pw.collect(p + ".bn_pw", out);
        }
    }
    pool_conv.collect(prefix + ".pool.conv", out);
    pool_bn.collect(prefix + ".pool.bn", out);
    project.collect(prefix + ".project.conv", out);
    project_bn.collect(prefix + ".project.bn", out);
}

template <typename T>
DeltaSegModelT<T>::DeltaSegModelT(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    dropout_rng_.seed(cfg_.seed ^ 0x9E3779B97F4A7C15ull);

    const auto w = cfg_.scaled_widths();
    const auto& dil = cfg_.encoder_dilations;
    using Att = typename DoubleConvBlockT<T>::Att;
    const Att dec_att = cfg_.variant == Variant::Full ? Att::CA : Att::SE;

    int c_in = 3;
    for (int i = 0; i < 5; ++i) {
        stages_[static_cast<std::size_t>(i)] = DoubleConvBlockT<T>(
            c_in, w[static_cast<std::size_t>(i)], dil[static_cast<std::size_t>(i)], Att::SE, cfg_.se_reduction,
            cfg_.ca_reduction, rng);
        c_in = w[static_cast<std::size_t>(i)];
    }

    aspp_ = ASPPT<T>(w[4], cfg_.aspp_rates, cfg_.variant == Variant::Full, cfg_.aspp_dropout, rng, &dropout_rng_);
    if (cfg_.variant == Variant::Full)
        bottleneck_ca_ = std::make_unique<CoordAttModuleT<T>>(w[4], cfg_.ca_reduction, rng);

    // skip refiners; decoder gating signals are the bottleneck for level 4 and
    // the previous decoder stage output for levels 3..1
    const int dec_out[4] = {w[0], w[1], w[2], w[3]};  // dec1..dec4
    const int gate_dec_ch[4] = {dec_out[1], dec_out[2], dec_out[3], w[4]};
    const bool gate_strided[4] = {true, true, false, false};
    const bool adj_same[4] = {false, false, false, true};
    const int adj_ch[4] = {0, w[0], w[1], w[2]};
    if (cfg_.variant == Variant::V1) {
        for (int l = 0; l < 4; ++l)
            delta_[static_cast<std::size_t>(l)] = std::make_unique<DeltaOperatorT<T>>(w[static_cast<std::size_t>(l)], rng);
    } else {
        for (int l = 0; l < 4; ++l)
            dda_[static_cast<std::size_t>(l)] = std::make_unique<DDAModuleT<T>>(
                w[static_cast<std::size_t>(l)], adj_ch[l], gate_dec_ch[l], adj_same[l], gate_strided[l], rng);
    }

    ConvSpec u2;
    u2.in_channels = dec_out[2];
    u2.out_channels = dec_out[1];
    u2.kernel = 2;
    u2.stride = 2;
    u2.transposed = true;
    up2_ = Conv2dLayerT<T>(u2, true, rng);
    ConvSpec u1;
    u1.in_channels = dec_out[1];
    u1.out_channels = dec_out[0];
    u1.kernel = 2;
    u1.stride = 2;
    u1.transposed = true;
    up1_ = Conv2dLayerT<T>(u1, true, rng);

    const int dec_in[4] = {w[0] + dec_out[0], w[1] + dec_out[1], w[2] + dec_out[2], w[3] + w[4]};
    for (int i = 0; i < 4; ++i)
        dec_[static_cast<std::size_t>(i)] = DoubleConvBlockT<T>(dec_in[i], dec_out[i], 1, dec_att,
                                                                cfg_.se_reduction, cfg_.ca_reduction, rng);

    for (int i = 0; i < 4; ++i) {
        heads_[static_cast<std::size_t>(i)] = Conv2dLayerT<T>(spec1x1(dec_out[i], cfg_.num_classes), true, rng);
        // zero head bias keeps fresh logits centred
        std::fill(heads_[static_cast<std::size_t>(i)].bias->data.begin(),
                  heads_[static_cast<std::size_t>(i)].bias->data.end(), T(0));
    }
}

template <typename T>
void DeltaSegModelT<T>::set_training(bool t) {
    training_ = t;
    for (auto& s : stages_) s.set_training(t);
    aspp_.set_training(t);
    if (bottleneck_ca_) bottleneck_ca_->set_training(t);
    for (auto& d : dda_)
        if (d) d->set_training(t);
    for (auto& d : dec_) d.set_training(t);
}

template <typename T>
std::vector<TensorPtrT<T>> DeltaSegModelT<T>::encoder_forward(const TensorPtrT<T>& x) {
    if (x->rank() != 4 || x->dim(1) != 3)
        throw std::invalid_argument("encoder: input must be [N,3,H,W], got " + shape_str(x->shape));
    if (x->dim(2) != cfg_.input_h || x->dim(3) != cfg_.input_w)
        throw std::invalid_argument("encoder: input extent " + std::to_string(x->dim(2)) + "x" +
                                    std::to_string(x->dim(3)) + " does not match configured " +
                                    std::to_string(cfg_.input_h) + "x" + std::to_string(cfg_.input_w));
    std::vector<TensorPtrT<T>> f(5);
    f[0] = stages_[0].forward(x);
    f[1] = stages_[1].forward(pool2d(f[0], PoolKind::Max, 2, 2));
    f[2] = stages_[2].forward(pool2d(f[1], PoolKind::Max, 2, 2));
    f[3] = stages_[3].forward(f[2]);
    f[4] = stages_[4].forward(f[3]);
    return f;
}

template <typename T>
TensorPtrT<T> DeltaSegModelT<T>::aspp_forward(const TensorPtrT<T>& f5) {
    auto b = aspp_.forward(f5);
    if (bottleneck_ca_) b = bottleneck_ca_->forward(b);
    return b;
}

template <typename T>
TensorPtrT<T> DeltaSegModelT<T>::refine_skip(int level, const TensorPtrT<T>& f_enc, const TensorPtrT<T>& f_adj,
                                             const TensorPtrT<T>& f_dec) {
    if (cfg_.variant == Variant::V1) return delta_[static_cast<std::size_t>(level)]->forward(f_enc);
    return dda_[static_cast<std::size_t>(level)]->forward(f_enc, f_adj, f_dec);
}

template <typename T>
ModelOutputsT<T> DeltaSegModelT<T>::decoder_forward(const TensorPtrT<T>& bottleneck,
                                                    const std::vector<TensorPtrT<T>>& skips) {
    if (!bottleneck) throw std::invalid_argument("decoder: missing bottleneck feature");
    if (skips.size() != 5) throw std::invalid_argument("decoder: expected 5 encoder features, got " +
                                                       std::to_string(skips.size()));
    for (std::size_t i = 0; i < 4; ++i)
        if (!skips[i]) throw std::invalid_argument("decoder: missing skip feature for stage " + std::to_string(i + 1));

    auto r4 = refine_skip(3, skips[3], skips[2], bottleneck);
    auto d4 = dec_[3].forward(concat<T>({r4, bottleneck}, 1));
    auto r3 = refine_skip(2, skips[2], skips[1], d4);
    auto d3 = dec_[2].forward(concat<T>({r3, d4}, 1));
    auto r2 = refine_skip(1, skips[1], skips[0], d3);
    auto d2 = dec_[1].forward(concat<T>({r2, up2_.forward(d3)}, 1));
    auto r1 = refine_skip(0, skips[0], nullptr, d2);
    auto d1 = dec_[0].forward(concat<T>({r1, up1_.forward(d2)}, 1));

    ModelOutputsT<T> out;
    out.primary = heads_[0].forward(d1);
    if (training_) {
        out.aux.push_back(heads_[1].forward(d2));
        out.aux.push_back(heads_[2].forward(d3));
        out.aux.push_back(heads_[3].forward(d4));
    }
    return out;
}

template <typename T>
ModelOutputsT<T> DeltaSegModelT<T>::forward(const TensorPtrT<T>& x) {
    auto f = encoder_forward(x);
    auto b = aspp_forward(f[4]);
    return decoder_forward(b, f);
}

template <typename T>
ParamListT<T> DeltaSegModelT<T>::params() {
    ParamListT<T> out;
    for (int i = 0; i < 5; ++i)
        stages_[static_cast<std::size_t>(i)].collect("encoder.stage" + std::to_string(i + 1), out);
    aspp_.collect("aspp", out);
    if (bottleneck_ca_) bottleneck_ca_->collect("bottleneck_ca", out);
    for (int l = 0; l < 4; ++l) {
        const std::string p = "skip" + std::to_string(l + 1);
        if (cfg_.variant == Variant::V1)
            delta_[static_cast<std::size_t>(l)]->collect(p + ".delta", out);
        else
            dda_[static_cast<std::size_t>(l)]->collect(p, out);
    }
    up2_.collect("decoder.up2", out);
    up1_.collect("decoder.up1", out);
    for (int i = 0; i < 4; ++i)
        dec_[static_cast<std::size_t>(i)].collect("decoder.dec" + std::to_string(i + 1), out);
    for (int i = 0; i < 4; ++i)
        heads_[static_cast<std::size_t>(i)].collect("heads.head" + std::to_string(i + 1), out);
    return out;
}

template <typename T>
typename DeltaSegModelT<T>::ParamCount DeltaSegModelT<T>::count_params() {
    ParamCount pc;
    std::vector<std::pair<std::string, std::int64_t>> acc;
    for (const auto& p : params()) {
        if (!p.trainable) continue;
        const std::int64_t n = p.tensor->numel();
        pc.total += n;
        const std::string top = p.path.substr(0, p.path.find('.'));
        auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& kv) { return kv.first == top; });
        if (it == acc.end())
            acc.emplace_back(top, n);
        else
            it->second += n;
    }
    pc.by_module = std::move(acc);
    return pc;
}

template struct DoubleConvBlockT<float>;
template struct DoubleConvBlockT<double>;
template struct ASPPT<float>;
template struct ASPPT<double>;
template class DeltaSegModelT<float>;
template class DeltaSegModelT<double>;

}  // namespace deltaseg
