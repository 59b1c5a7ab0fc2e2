#include "deltaseg/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace deltaseg {

template <typename T>
void kaiming_uniform_init(const TensorPtrT<T>& w, int fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (auto& v : w->data) v = static_cast<T>(uni(rng));
}

template <typename T>
Conv2dLayerT<T>::Conv2dLayerT(ConvSpec s, bool with_bias, std::mt19937_64& rng) : spec(s) {
    spec.validate();
    const int k = spec.kernel;
    std::vector<int> wshape = spec.transposed
                                  ? std::vector<int>{spec.in_channels, spec.out_channels / spec.groups, k, k}
                                  : std::vector<int>{spec.out_channels, spec.in_channels / spec.groups, k, k};
    weight = TensorT<T>::create(wshape, true);
    kaiming_uniform_init(weight, wshape[1] * k * k, rng);
    if (with_bias) bias = TensorT<T>::create({spec.out_channels}, true);
}

template <typename T>
void Conv2dLayerT<T>::collect(const std::string& prefix, ParamListT<T>& out) const {
    out.push_back({prefix + ".weight", weight, nullptr, true});
    if (bias) out.push_back({prefix + ".bias", bias, nullptr, true});
}

template <typename T>
std::int64_t Conv2dLayerT<T>::param_count() const {
    return weight->numel() + (bias ? bias->numel() : 0);
}

template <typename T>
BatchNorm2dLayerT<T>::BatchNorm2dLayerT(int channels)
    : gamma(TensorT<T>::full({channels}, T(1), true)),
      beta(TensorT<T>::create({channels}, true)),
      running_mean(static_cast<std::size_t>(channels), T(0)),
      running_var(static_cast<std::size_t>(channels), T(1)) {}

template <typename T>
void BatchNorm2dLayerT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    out.push_back({prefix + ".gamma", gamma, nullptr, true});
    out.push_back({prefix + ".beta", beta, nullptr, true});
    out.push_back({prefix + ".running_mean", nullptr, &running_mean, false});
    out.push_back({prefix + ".running_var", nullptr, &running_var, false});
}

template <typename T>
void PReLULayerT<T>::collect(const std::string& prefix, ParamListT<T>& out) const {
    out.push_back({prefix + ".slope", slope, nullptr, true});
}

template <typename T>
DSCUnitT<T>::DSCUnitT(int c_in, int c_out, int dilation, std::mt19937_64& rng, int kernel) {
    ConvSpec dw;
    dw.in_channels = c_in;
    dw.out_channels = c_in;
    dw.kernel = kernel;
    dw.stride = 1;
    dw.padding = dilation * (kernel - 1) / 2;
    dw.dilation = dilation;
    dw.groups = c_in;
    depthwise = Conv2dLayerT<T>(dw, false, rng);
    bn_dw = BatchNorm2dLayerT<T>(c_in);

    ConvSpec pw;
    pw.in_channels = c_in;
    pw.out_channels = c_out;
    pw.kernel = 1;
    pointwise = Conv2dLayerT<T>(pw, false, rng);
    bn_pw = BatchNorm2dLayerT<T>(c_out);
}

template <typename T>
TensorPtrT<T> DSCUnitT<T>::forward(const TensorPtrT<T>& x) {
    auto h = relu6(bn_dw.forward(depthwise.forward(x)));
    return relu6(bn_pw.forward(pointwise.forward(h)));
}

template <typename T>
void DSCUnitT<T>::collect(const std::string& prefix, ParamListT<T>& out) {
    depthwise.collect(prefix + ".depthwise", out);
    bn_dw.collect(prefix + ".bn_dw", out);
    pointwise.collect(prefix + ".pointwise", out);
    bn_pw.collect(prefix + ".bn_pw", out);
}

#define DS_INSTANTIATE_LAYERS(T)                                                      \
    template void kaiming_uniform_init<T>(const TensorPtrT<T>&, int, std::mt19937_64&); \
    template struct Conv2dLayerT<T>;                                                  \
    template struct BatchNorm2dLayerT<T>;                                             \
    template struct PReLULayerT<T>;                                                   \
    template struct DSCUnitT<T>;

DS_INSTANTIATE_LAYERS(float)
DS_INSTANTIATE_LAYERS(double)

}  // namespace deltaseg
