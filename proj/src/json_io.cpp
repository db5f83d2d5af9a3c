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

#include "lloom/json_io.hpp"

namespace lloom {

namespace {

template <class V>
void read_opt(const nlohmann::json& j, const char* key, V& out)
{
    if (const auto it = j.find(key); it != j.end()) {
        it->get_to(out);
    }
}

} // namespace

void to_json(nlohmann::json& j, const ModelConfig& c)
{
    j = {{"latent_dim", c.latent_dim},
         {"classifier_hidden_layers", c.classifier_hidden_layers},
         {"classifier_units", c.classifier_units},
         {"n_classes", c.n_classes},
         {"image_side", c.image_side},
         {"conv_channels", c.conv_channels},
         {"conv_kernel", c.conv_kernel},
         {"conv_stride", c.conv_stride},
         {"conv_padding", c.conv_padding},
         {"dense_units", c.dense_units}};
}

void from_json(const nlohmann::json& j, ModelConfig& c)
{
    read_opt(j, "latent_dim", c.latent_dim);
    read_opt(j, "classifier_hidden_layers", c.classifier_hidden_layers);
    read_opt(j, "classifier_units", c.classifier_units);
    read_opt(j, "n_classes", c.n_classes);
    read_opt(j, "image_side", c.image_side);
    read_opt(j, "conv_channels", c.conv_channels);
    read_opt(j, "conv_kernel", c.conv_kernel);
    read_opt(j, "conv_stride", c.conv_stride);
    read_opt(j, "conv_padding", c.conv_padding);
    read_opt(j, "dense_units", c.dense_units);
}

void to_json(nlohmann::json& j, const LossWeights& w)
{
    j = {{"beta_kl", w.beta_kl}, {"beta_classifier", w.beta_classifier}};
}

void from_json(const nlohmann::json& j, LossWeights& w)
{
    read_opt(j, "beta_kl", w.beta_kl);
    read_opt(j, "beta_classifier", w.beta_classifier);
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"weights", c.weights},
         {"seed", c.seed},
         {"snapshot_every", c.snapshot_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "learning_rate", c.learning_rate);
    read_opt(j, "weights", c.weights);
    read_opt(j, "seed", c.seed);
    read_opt(j, "snapshot_every", c.snapshot_every);
}

void to_json(nlohmann::json& j, const AdamHyper& h)
{
    j = {{"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"eps", h.eps}};
}

void from_json(const nlohmann::json& j, AdamHyper& h)
{
    read_opt(j, "lr", h.lr);
    read_opt(j, "beta1", h.beta1);
    read_opt(j, "beta2", h.beta2);
    read_opt(j, "eps", h.eps);
}

void to_json(nlohmann::json& j, const LossBreakdown& l)
{
    j = {{"total", l.total},
         {"reconst", l.reconstruction},
         {"kl", l.kl},
         {"classifier", l.classifier},
         {"labeled_count", l.labeled_count}};
}

} // namespace lloom
