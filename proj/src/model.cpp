// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "lloom/model.hpp"

#include "lloom/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace lloom {

namespace {

auto conv_out(std::size_t side, const ModelConfig& c) -> std::size_t
{
    if (side + 2 * c.conv_padding < c.conv_kernel) {
        return 0;
    }
    return (side + 2 * c.conv_padding - c.conv_kernel) / c.conv_stride + 1;
}

auto deconv_out(std::size_t side, const ModelConfig& c) -> std::size_t
{
    return (side - 1) * c.conv_stride + c.conv_kernel - 2 * c.conv_padding;
}

auto hidden_name(std::size_t i) -> std::string
{
    return "classifier/hidden" + std::to_string(i);
}

} // namespace

void ModelConfig::validate() const
{
    if (latent_dim != 2 && latent_dim != 3) {
        throw Error(ErrorCode::InvalidArgument, "latent_dim must be 2 or 3");
    }
    if (n_classes < 2 || classifier_units == 0 || conv_channels == 0 || dense_units == 0 ||
        conv_stride == 0) {
        throw Error(ErrorCode::InvalidArgument, "model sizes must be positive");
    }
    const std::size_t s1 = conv_out(image_side, *this);
    const std::size_t s2 = s1 == 0 ? 0 : conv_out(s1, *this);
    if (s2 == 0 || deconv_out(s2, *this) != s1 || deconv_out(s1, *this) != image_side) {
        throw Error(ErrorCode::InvalidArgument,
                    "conv geometry does not invert for image side " + std::to_string(image_side));
    }
}

auto ModelConfig::feature_side() const -> std::size_t
{
    return conv_out(conv_out(image_side, *this), *this);
}

auto ModelConfig::feature_size() const -> std::size_t
{
    return conv_channels * feature_side() * feature_side();
}

template <class T>
auto LatentGaussian<T>::sigma() const -> Tensor<T>
{
    Tensor<T> out = logvar;
    for (auto& v : out.data()) {
        v = std::exp(v / T{2});
    }
    return out;
}

template <class T>
auto reparameterize(const LatentGaussian<T>& g, const Tensor<T>& eps) -> Tensor<T>
{
    expect_shape(eps.shape(), g.mu.shape(), "reparameterize eps");
    Tensor<T> z = g.mu;
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = g.mu[i] + std::exp(g.logvar[i] / T{2}) * eps[i];
    }
    return z;
}

template <class T>
auto kl_divergence_rows(const LatentGaussian<T>& g) -> std::vector<double>
{
    expect_shape(g.logvar.shape(), g.mu.shape(), "kl logvar");
    const std::size_t rows = g.mu.dim(0);
    const std::size_t d = g.mu.size() / rows;
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            const double m = g.mu[r * d + j];
            const double lv = g.logvar[r * d + j];
            out[r] += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
        }
    }
    return out;
}

template <class T>
auto kl_divergence(const LatentGaussian<T>& g) -> double
{
    const auto rows = kl_divergence_rows(g);
    double s = 0.0;
    for (auto v : rows) {
        s += v;
    }
    return s / static_cast<double>(rows.size());
}

template <class T>
auto reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_recon) -> double
{
    ad::Tape<T> tape;
    return static_cast<double>(ad::bce(x, tape.constant(x_recon)).value()[0]);
}

template <class T>
auto classifier_loss(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                     const Tensor<T>& y_pred) -> double
{
    ad::Tape<T> tape;
    return static_cast<double>(ad::cross_entropy(one_hot, mask, tape.constant(y_pred)).value()[0]);
}

template <class T>
auto make_batch(const Dataset& d, std::span<const std::size_t> positions) -> Batch<T>
{
    Batch<T> b;
    b.images = d.image_batch<T>(positions);
    b.one_hot = Tensor<T>({positions.size(), static_cast<std::size_t>(kNumClasses)});
    b.mask.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (const auto l = d.label(positions[i])) {
            b.one_hot[i * kNumClasses + static_cast<std::size_t>(*l)] = T{1};
            b.mask[i] = 1;
        }
    }
    return b;
}

template <class T>
auto DgmModel<T>::param_specs(const ModelConfig& c) -> std::vector<ParamSpec>
{
    c.validate();
    const std::size_t k2 = c.conv_kernel * c.conv_kernel;
    const std::size_t ch = c.conv_channels;
    const std::size_t f = c.feature_size();
    const std::size_t u = c.dense_units;
    const std::size_t d = c.latent_dim;
    std::vector<ParamSpec> specs;
    const auto weight = [&](std::string name, Shape shape, std::size_t fan_in,
                            std::size_t fan_out) {
        specs.push_back({std::move(name), std::move(shape), ParamKind::Weight, fan_in, fan_out});
    };
    const auto bias = [&](std::string name, std::size_t n) {
        specs.push_back({std::move(name), {n}, ParamKind::Bias, 1, 1});
    };

    weight("encoder/conv1/w", {ch, 1, c.conv_kernel, c.conv_kernel}, k2, ch * k2);
    bias("encoder/conv1/b", ch);
    weight("encoder/conv2/w", {ch, ch, c.conv_kernel, c.conv_kernel}, ch * k2, ch * k2);
    bias("encoder/conv2/b", ch);
    weight("encoder/fc/w", {f, u}, f, u);
    bias("encoder/fc/b", u);
    weight("encoder/mu/w", {u, d}, u, d);
    bias("encoder/mu/b", d);
    weight("encoder/logvar/w", {u, d}, u, d);
    bias("encoder/logvar/b", d);

    weight("decoder/fc1/w", {d, u}, d, u);
    bias("decoder/fc1/b", u);
    weight("decoder/fc2/w", {u, f}, u, f);
    bias("decoder/fc2/b", f);
    weight("decoder/deconv1/w", {ch, ch, c.conv_kernel, c.conv_kernel}, ch * k2, ch * k2);
    bias("decoder/deconv1/b", ch);
    weight("decoder/deconv2/w", {ch, 1, c.conv_kernel, c.conv_kernel}, k2, ch * k2);
    bias("decoder/deconv2/b", 1);

    std::size_t width = d;
    for (std::size_t i = 0; i < c.classifier_hidden_layers; ++i) {
        weight(hidden_name(i) + "/w", {width, c.classifier_units}, width, c.classifier_units);
        bias(hidden_name(i) + "/b", c.classifier_units);
        width = c.classifier_units;
    }
    weight("classifier/out/w", {width, c.n_classes}, width, c.n_classes);
    bias("classifier/out/b", c.n_classes);
    return specs;
}

template <class T>
DgmModel<T>::DgmModel(ModelConfig config, std::uint64_t seed)
    : config_(config), params_(init_params<T>(param_specs(config), seed))
{}

template <class T>
DgmModel<T>::DgmModel(ModelConfig config, ParamStore<T> params)
    : config_(config), params_(std::move(params))
{
    const auto specs = param_specs(config_);
    if (specs.size() != params_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "parameter count does not match the config");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& e = params_.at(i);
        if (e.name != specs[i].name) {
            throw Error(ErrorCode::ShapeMismatch,
                        "parameter " + e.name + " where " + specs[i].name + " was expected");
        }
        expect_shape(e.value.shape(), specs[i].shape, e.name.c_str());
    }
}

template <class T>
auto DgmModel<T>::with_new_head(const ModelConfig& head_config, std::uint64_t seed) const
    -> DgmModel
{
    ModelConfig body = head_config;
    body.classifier_hidden_layers = config_.classifier_hidden_layers;
    body.classifier_units = config_.classifier_units;
    if (!(body == config_)) {
        throw Error(ErrorCode::InvalidArgument, "only the classifier head may change");
    }
    DgmModel fresh(head_config, seed);
    for (const auto& e : params_) {
        if (!std::string_view(e.name).starts_with(kClassifierPrefix)) {
            fresh.params_.assign(e.name, e.value);
        }
    }
    return fresh;
}

template <class T>
auto DgmModel<T>::param(ad::Tape<T>& tape, const std::string& name, bool differentiable) const
    -> ad::Var<T>
{
    return differentiable ? tape.leaf(name, params_.get(name)) : tape.constant(params_.get(name));
}

template <class T>
auto DgmModel<T>::encode_graph(ad::Tape<T>& tape, ad::Var<T> x, bool differentiable) const
    -> Latent
{
    const auto& c = config_;
    if (x.shape().size() != 4 || x.shape()[1] != 1 || x.shape()[2] != c.image_side ||
        x.shape()[3] != c.image_side) {
        throw Error(ErrorCode::ShapeMismatch, "encoder expects [B,1," +
                                                  std::to_string(c.image_side) + "," +
                                                  std::to_string(c.image_side) + "], got " +
                                                  shape_string(x.shape()));
    }
    const auto p = [&](const char* name) { return param(tape, name, differentiable); };
    const std::size_t batch = x.shape()[0];
    auto h = ad::conv2d(x, p("encoder/conv1/w"), c.conv_stride, c.conv_padding);
    h = ad::relu(ad::add_channel_bias(h, p("encoder/conv1/b")));
    h = ad::conv2d(h, p("encoder/conv2/w"), c.conv_stride, c.conv_padding);
    h = ad::relu(ad::add_channel_bias(h, p("encoder/conv2/b")));
    h = ad::reshape(h, {batch, c.feature_size()});
    h = ad::relu(ad::dense(h, p("encoder/fc/w"), p("encoder/fc/b")));
    auto mu = ad::dense(h, p("encoder/mu/w"), p("encoder/mu/b"));
    auto logvar = ad::clamp(ad::dense(h, p("encoder/logvar/w"), p("encoder/logvar/b")),
                            static_cast<T>(kLogvarMin), static_cast<T>(kLogvarMax));
    return {mu, logvar};
}

template <class T>
auto DgmModel<T>::decode_logits_graph(ad::Tape<T>& tape, ad::Var<T> z, bool differentiable) const
    -> ad::Var<T>
{
    const auto& c = config_;
    if (z.shape().size() != 2 || z.shape()[1] != c.latent_dim) {
        throw Error(ErrorCode::ShapeMismatch, "decoder expects [B," +
                                                  std::to_string(c.latent_dim) + "], got " +
                                                  shape_string(z.shape()));
    }
    const auto p = [&](const char* name) { return param(tape, name, differentiable); };
    const std::size_t batch = z.shape()[0];
    const std::size_t fs = c.feature_side();
    auto h = ad::relu(ad::dense(z, p("decoder/fc1/w"), p("decoder/fc1/b")));
    h = ad::relu(ad::dense(h, p("decoder/fc2/w"), p("decoder/fc2/b")));
    h = ad::reshape(h, {batch, c.conv_channels, fs, fs});
    h = ad::conv_transpose2d(h, p("decoder/deconv1/w"), c.conv_stride, c.conv_padding);
    h = ad::relu(ad::add_channel_bias(h, p("decoder/deconv1/b")));
    h = ad::conv_transpose2d(h, p("decoder/deconv2/w"), c.conv_stride, c.conv_padding);
    return ad::add_channel_bias(h, p("decoder/deconv2/b"));
}

template <class T>
auto DgmModel<T>::classifier_logits_graph(ad::Tape<T>& tape, ad::Var<T> z,
                                          bool differentiable) const -> ad::Var<T>
{
    if (z.shape().size() != 2 || z.shape()[1] != config_.latent_dim) {
        throw Error(ErrorCode::ShapeMismatch, "classifier expects [B,d], got " +
                                                  shape_string(z.shape()));
    }
    auto h = z;
    for (std::size_t i = 0; i < config_.classifier_hidden_layers; ++i) {
        const auto base = hidden_name(i);
        h = ad::relu(ad::dense(h, param(tape, base + "/w", differentiable),
                               param(tape, base + "/b", differentiable)));
    }
    return ad::dense(h, param(tape, "classifier/out/w", differentiable),
                     param(tape, "classifier/out/b", differentiable));
}

template <class T>
auto DgmModel<T>::encode(const Tensor<T>& images) const -> LatentGaussian<T>
{
    ad::Tape<T> tape;
    const auto latent = encode_graph(tape, tape.constant(images), false);
    return {latent.mu.value(), latent.logvar.value()};
}

template <class T>
auto DgmModel<T>::decode(const Tensor<T>& z) const -> Tensor<T>
{
    ad::Tape<T> tape;
    return kernels::sigmoid(decode_logits_graph(tape, tape.constant(z), false).value());
}

template <class T>
auto DgmModel<T>::classify(const Tensor<T>& z) const -> Tensor<T>
{
    ad::Tape<T> tape;
    return kernels::softmax(classifier_logits_graph(tape, tape.constant(z), false).value());
}

template <class T>
auto DgmModel<T>::total_loss(const Batch<T>& batch, const LossWeights& weights,
                             const Tensor<T>& eps, ParamStore<T>* grads) const -> LossBreakdown
{
    const bool differentiable = grads != nullptr;
    ad::Tape<T> tape;
    const auto x = tape.constant(batch.images);
    const auto latent = encode_graph(tape, x, differentiable);
    expect_shape(eps.shape(), latent.mu.shape(), "reparameterization noise");

    const auto sigma = ad::exp(ad::scale(latent.logvar, T{0.5}));
    const auto z = ad::add(latent.mu, ad::mul(sigma, tape.constant(eps)));

    const auto logits = decode_logits_graph(tape, z, differentiable);
    const auto target = batch.images;
    const auto recon = ad::bce_with_logits(target, logits);
    const auto kl = ad::kl_standard_normal(latent.mu, latent.logvar);
    const auto class_logits = classifier_logits_graph(tape, z, differentiable);
    const auto ce = ad::softmax_cross_entropy(batch.one_hot, batch.mask, class_logits);
    const auto total = ad::linear_combination<T>(
        {recon, kl, ce},
        {T{1}, static_cast<T>(weights.beta_kl), static_cast<T>(weights.beta_classifier)});

    LossBreakdown out;
    out.reconstruction = static_cast<double>(recon.value()[0]);
    out.kl = static_cast<double>(kl.value()[0]);
    out.classifier = static_cast<double>(ce.value()[0]);
    out.total = static_cast<double>(total.value()[0]);
    out.labeled_count = static_cast<std::size_t>(
        std::count(batch.mask.begin(), batch.mask.end(), static_cast<unsigned char>(1)));
    for (double v : {out.reconstruction, out.kl, out.classifier, out.total}) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFinite, "loss component is not finite");
        }
    }

    if (grads != nullptr) {
        tape.backward(total);
        ParamStore<T> g;
        for (const auto& e : params_) {
            g.add(e.name, tape.leaf_gradient(e.name));
        }
        *grads = std::move(g);
    }
    return out;
}

template <class T>
auto DgmModel<T>::embed_means(const Dataset& d, std::size_t batch_size) const -> Embedding
{
    Embedding out;
    out.dim = config_.latent_dim;
    out.ids = d.sample_ids();
    out.mu.resize(d.size() * out.dim);
    out.sigma.resize(d.size() * out.dim);
    out.pred.resize(d.size());
    out.confidence.resize(d.size());
    std::vector<std::size_t> positions;
    for (std::size_t start = 0; start < d.size(); start += batch_size) {
        const std::size_t end = std::min(d.size(), start + batch_size);
        positions.resize(end - start);
        for (std::size_t i = start; i < end; ++i) {
            positions[i - start] = i;
        }
        const auto latent = encode(d.image_batch<T>(positions));
        const auto sigma = latent.sigma();
        const auto probs = classify(latent.mu);
        const std::size_t nc = config_.n_classes;
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t r = i - start;
            for (std::size_t j = 0; j < out.dim; ++j) {
                out.mu[i * out.dim + j] = static_cast<float>(latent.mu[r * out.dim + j]);
                out.sigma[i * out.dim + j] = static_cast<float>(sigma[r * out.dim + j]);
            }
            const T* row = probs.raw() + r * nc;
            const auto best = std::max_element(row, row + nc);
            out.pred[i] = static_cast<int>(best - row);
            out.confidence[i] = static_cast<float>(*best);
        }
    }
    return out;
}

template class DgmModel<float>;
template class DgmModel<double>;

#define LLOOM_INSTANTIATE_MODEL_FUNCS(T)                                                  \
    template struct LatentGaussian<T>;                                                    \
    template auto reparameterize<T>(const LatentGaussian<T>&, const Tensor<T>&)->Tensor<T>; \
    template auto kl_divergence_rows<T>(const LatentGaussian<T>&)->std::vector<double>;   \
    template auto kl_divergence<T>(const LatentGaussian<T>&)->double;                     \
    template auto reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&)->double;     \
    template auto classifier_loss<T>(const Tensor<T>&, std::span<const unsigned char>,    \
                                     const Tensor<T>&)                                    \
        ->double;                                                                         \
    template auto make_batch<T>(const Dataset&, std::span<const std::size_t>)->Batch<T>;

LLOOM_INSTANTIATE_MODEL_FUNCS(float)
LLOOM_INSTANTIATE_MODEL_FUNCS(double)

#undef LLOOM_INSTANTIATE_MODEL_FUNCS

} // namespace lloom
