#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kws/nn.hpp"
#include "kws/tensor.hpp"

namespace kws {

enum class SizePreset { Desk, R, L, XL };

std::string preset_name(SizePreset p);
SizePreset preset_from_name(const std::string& name);

// Encoder: 4 strided temporal convolutions (ReLU) + linear bottleneck to M.
// Decoder: 3 temporal convolutions, last one linear, emitting C_dec logits.
struct ModelConfig {
    int feature_dim = 40;
    std::array<int, 4> encoder_channels{24, 24, 24, 24};
    std::array<int, 4> encoder_kernels{8, 5, 5, 5};
    std::array<int, 4> encoder_strides{2, 1, 1, 1};
    std::array<int, 3> decoder_channels{24, 24, 2};  // last entry == num_decoder_classes
    std::array<int, 3> decoder_kernels{5, 5, 5};
    std::array<int, 3> decoder_strides{1, 1, 1};
    int bottleneck_dim = 32;  // M; doubles as the encoder class count
    int num_decoder_classes = 2;
    SizePreset size_preset = SizePreset::Desk;

    static ModelConfig preset(SizePreset p);
    void validate() const;

    int encoder_stride_total() const;
    int total_stride() const;  // input frames per decoder-logit frame
};

enum class ConditioningMode { None, Concat, FiLM };

std::string mode_name(ConditioningMode m);
ConditioningMode mode_from_name(const std::string& name);

struct LocaleOneHot {
    int index = 0;
    int num_locales = 1;

    LocaleOneHot(int idx, int n);
    std::vector<double> vec() const;
};

struct ParameterSet {
    ModelConfig config;
    ConditioningMode mode = ConditioningMode::None;
    int num_locales = 1;
    std::uint64_t seed = 0;
    std::string regime;  // free-form provenance tag carried in checkpoints
    TensorMap tensors;
};

ParameterSet build(const ModelConfig& config, int num_locales, ConditioningMode mode,
                   std::uint64_t seed);

// Intermediates retained for the backward pass.
struct ForwardCache {
    Tensor input;
    std::array<Tensor, 4> enc_pre;   // conv outputs before ReLU
    std::array<Tensor, 4> enc_post;  // after ReLU
    Tensor P;
    Tensor conditioned;
    std::array<Tensor, 3> dec_pre;
    std::array<Tensor, 3> dec_post;
    std::optional<LocaleOneHot> locale;
};

struct ForwardOutput {
    Tensor encoder_logits;  // T_P x M
    Tensor decoder_logits;  // T' x C_dec
};

Tensor encoder_forward(const ParameterSet& params, const Tensor& features,
                       ForwardCache* cache = nullptr);

Tensor condition(const Tensor& P, const std::optional<LocaleOneHot>& locale, ConditioningMode mode,
                 const ParameterSet& params);

Tensor decoder_forward(const ParameterSet& params, const Tensor& conditioned,
                       ForwardCache* cache = nullptr);

ForwardOutput forward(const ParameterSet& params, const Tensor& features,
                      const std::optional<LocaleOneHot>& locale = std::nullopt,
                      ForwardCache* cache = nullptr);

// Backpropagates the two head gradients through the whole network and
// accumulates parameter gradients into `grads` (missing entries are created
// as zeros first). grad_P_head may be empty (rank 0) when the encoder head
// carries no loss.
void model_backward(const ParameterSet& params, const ForwardCache& cache, const Tensor& grad_P_head,
                    const Tensor& grad_decoder_logits, TensorMap& grads);

std::int64_t param_count(const ParameterSet& params);
std::int64_t extra_param_count(const ModelConfig& config, int num_locales, ConditioningMode mode);

// Pearson correlation of per-locale FiLM rows v_l = concat(scale row, shift row).
// A locale whose scale and shift rows are both constant (e.g. the identity
// init) carries no modulation signal and makes the correlation undefined.
Tensor locale_similarity(const ParameterSet& params);

}  // namespace kws
