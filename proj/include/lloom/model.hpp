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

#pragma once

#include "lloom/dataset.hpp"
#include "lloom/ops.hpp"
#include "lloom/params.hpp"
#include "lloom/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lloom {

/// Architecture of the encoder/decoder stack and classifier head.
///
/// Encoder: conv(c@k x k, stride 2) -> ReLU -> conv(c@k x k, stride 2) -> ReLU
/// -> flatten -> dense(units) -> ReLU -> {dense(d) -> mu, dense(d) -> logvar}.
/// Decoder mirrors it with transposed convolutions and a sigmoid output.
/// The head maps z through `classifier_hidden_layers` ReLU layers of
/// `classifier_units` to softmax over `n_classes`; zero hidden layers is
/// multinomial logistic regression.
struct ModelConfig {
    std::size_t latent_dim = 2;
    std::size_t classifier_hidden_layers = 0;
    std::size_t classifier_units = 10;
    std::size_t n_classes = kNumClasses;
    std::size_t image_side = kImageSide;
    std::size_t conv_channels = 32;
    std::size_t conv_kernel = 4;
    std::size_t conv_stride = 2;
    std::size_t conv_padding = 1;
    std::size_t dense_units = 128;

    void validate() const;
    /// Spatial side of the deepest feature map.
    [[nodiscard]] auto feature_side() const -> std::size_t;
    [[nodiscard]] auto feature_size() const -> std::size_t;

    friend auto operator==(const ModelConfig&, const ModelConfig&) -> bool = default;
};

/// The prior is always a standard Gaussian; only the weights vary.
struct LossWeights {
    double beta_kl = 1.0;
    double beta_classifier = 1.0;

    friend auto operator==(const LossWeights&, const LossWeights&) -> bool = default;
};

struct LossBreakdown {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double classifier = 0.0;
    std::size_t labeled_count = 0;
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

template <class T>
struct LatentGaussian {
    Tensor<T> mu;     // [B, d]
    Tensor<T> logvar; // [B, d], clamped to [-10, 10]

    [[nodiscard]] auto sigma() const -> Tensor<T>;
};

/// z = mu + exp(logvar / 2) * eps.
template <class T>
auto reparameterize(const LatentGaussian<T>& g, const Tensor<T>& eps) -> Tensor<T>;

/// Closed-form KL to N(0, I): per-row values.
template <class T>
auto kl_divergence_rows(const LatentGaussian<T>& g) -> std::vector<double>;
template <class T>
auto kl_divergence(const LatentGaussian<T>& g) -> double;

/// BCE summed over pixels, mean over rows; probabilities clamped to
/// [1e-7, 1 - 1e-7].
template <class T>
auto reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_recon) -> double;

/// Cross-entropy averaged over rows with mask != 0; 0 when none are.
template <class T>
auto classifier_loss(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                     const Tensor<T>& y_pred) -> double;

/// Per-sample latent means, spreads and predictions (struct of arrays).
struct Embedding {
    std::size_t dim = 2;
    std::vector<std::int64_t> ids;
    std::vector<float> mu;    // size() * dim
    std::vector<float> sigma; // size() * dim
    std::vector<int> pred;
    std::vector<float> confidence;

    [[nodiscard]] auto size() const -> std::size_t { return ids.size(); }
    [[nodiscard]] auto mu_of(std::size_t i) const -> std::span<const float>
    {
        return std::span<const float>(mu).subspan(i * dim, dim);
    }
    [[nodiscard]] auto sigma_of(std::size_t i) const -> std::span<const float>
    {
        return std::span<const float>(sigma).subspan(i * dim, dim);
    }

    friend auto operator==(const Embedding&, const Embedding&) -> bool = default;
};

/// Mini-batch input for the loss.
template <class T>
struct Batch {
    Tensor<T> images;                 // [B, 1, side, side]
    Tensor<T> one_hot;                // [B, n_classes]
    std::vector<unsigned char> mask;  // B entries, 1 = labeled
};

template <class T>
auto make_batch(const Dataset& d, std::span<const std::size_t> positions) -> Batch<T>;

template <class T>
class DgmModel {
public:
    DgmModel(ModelConfig config, std::uint64_t seed);
    DgmModel(ModelConfig config, ParamStore<T> params);

    static auto param_specs(const ModelConfig& config) -> std::vector<ParamSpec>;

    [[nodiscard]] auto config() const -> const ModelConfig& { return config_; }
    [[nodiscard]] auto params() const -> const ParamStore<T>& { return params_; }
    auto params() -> ParamStore<T>& { return params_; }

    /// A model sharing this one's encoder/decoder weights with a fresh head
    /// for `head_config` (only head fields may differ).
    [[nodiscard]] auto with_new_head(const ModelConfig& head_config, std::uint64_t seed) const
        -> DgmModel;

    [[nodiscard]] auto encode(const Tensor<T>& images) const -> LatentGaussian<T>;
    /// Bernoulli means in (0, 1), shape [B, 1, side, side].
    [[nodiscard]] auto decode(const Tensor<T>& z) const -> Tensor<T>;
    /// Softmax class probabilities [B, n_classes].
    [[nodiscard]] auto classify(const Tensor<T>& z) const -> Tensor<T>;

    /// Runs encode -> reparameterize(eps) -> decode and classify(z) and
    /// combines the three terms. When `grads` is set it receives the
    /// gradient of the total for every parameter (zeros where none flows).
    /// Throws NonFinite if any term is NaN or infinite.
    auto total_loss(const Batch<T>& batch, const LossWeights& weights, const Tensor<T>& eps,
                    ParamStore<T>* grads = nullptr) const -> LossBreakdown;

    /// Deterministic embedding of every sample; the head is evaluated on mu.
    [[nodiscard]] auto embed_means(const Dataset& d, std::size_t batch_size = 512) const
        -> Embedding;

private:
    struct Latent {
        ad::Var<T> mu;
        ad::Var<T> logvar;
    };

    auto param(ad::Tape<T>& tape, const std::string& name, bool differentiable) const
        -> ad::Var<T>;
    auto encode_graph(ad::Tape<T>& tape, ad::Var<T> x, bool differentiable) const -> Latent;
    auto decode_logits_graph(ad::Tape<T>& tape, ad::Var<T> z, bool differentiable) const
        -> ad::Var<T>;
    auto classifier_logits_graph(ad::Tape<T>& tape, ad::Var<T> z, bool differentiable) const
        -> ad::Var<T>;

    ModelConfig config_;
    ParamStore<T> params_;
};

extern template class DgmModel<float>;
extern template class DgmModel<double>;

/// Parameter name prefixes.
inline constexpr std::string_view kEncoderPrefix = "encoder/";
inline constexpr std::string_view kDecoderPrefix = "decoder/";
inline constexpr std::string_view kClassifierPrefix = "classifier/";

} // namespace lloom
