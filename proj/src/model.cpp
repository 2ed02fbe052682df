#include "kws/model.hpp"

#include <cmath>

#include "kws/rng.hpp"

namespace kws {

std::string preset_name(SizePreset p) {
    switch (p) {
        case SizePreset::Desk: return "Desk";
        case SizePreset::R: return "R";
        case SizePreset::L: return "L";
        case SizePreset::XL: return "XL";
    }
    throw ConfigError("unknown preset");
}

SizePreset preset_from_name(const std::string& name) {
    if (name == "Desk") return SizePreset::Desk;
    if (name == "R") return SizePreset::R;
    if (name == "L") return SizePreset::L;
    if (name == "XL") return SizePreset::XL;
    throw ConfigError("unknown size preset '" + name + "'");
}

ModelConfig ModelConfig::preset(SizePreset p) {
    ModelConfig c;
    c.size_preset = p;
    int width = 24;
    switch (p) {
        case SizePreset::Desk: width = 24; break;  // <50K params
        case SizePreset::R: width = 116; break;    // ~330K params
        case SizePreset::L: width = 250; break;    // ~1.4M params
        case SizePreset::XL: width = 330; break;   // ~2.4M params
    }
    c.encoder_channels = {width, width, width, width};
    c.decoder_channels = {width, width, c.num_decoder_classes};
    return c;
}

void ModelConfig::validate() const {
    if (feature_dim <= 0 || bottleneck_dim <= 0 || num_decoder_classes <= 0)
        throw ConfigError("model dims must be positive");
    for (int v : encoder_channels)
        if (v <= 0) throw ConfigError("encoder channels must be positive");
    for (int v : encoder_kernels)
        if (v <= 0) throw ConfigError("encoder kernels must be positive");
    for (int v : encoder_strides)
        if (v <= 0) throw ConfigError("encoder strides must be positive");
    for (int v : decoder_kernels)
        if (v <= 0) throw ConfigError("decoder kernels must be positive");
    for (int v : decoder_strides)
        if (v <= 0) throw ConfigError("decoder strides must be positive");
    if (decoder_channels[2] != num_decoder_classes)
        throw ConfigError("last decoder channel count must equal num_decoder_classes");
}

int ModelConfig::encoder_stride_total() const {
    int s = 1;
    for (int v : encoder_strides) s *= v;
    return s;
}

int ModelConfig::total_stride() const {
    int s = encoder_stride_total();
    for (int v : decoder_strides) s *= v;
    return s;
}

std::string mode_name(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::None: return "None";
        case ConditioningMode::Concat: return "Concat";
        case ConditioningMode::FiLM: return "FiLM";
    }
    throw ConfigError("unknown conditioning mode");
}

ConditioningMode mode_from_name(const std::string& name) {
    if (name == "None") return ConditioningMode::None;
    if (name == "Concat") return ConditioningMode::Concat;
    if (name == "FiLM") return ConditioningMode::FiLM;
    throw ConfigError("unknown conditioning mode '" + name + "'");
}

LocaleOneHot::LocaleOneHot(int idx, int n) : index(idx), num_locales(n) {
    if (n < 1) throw ConfigError("locale one-hot length must be >= 1");
    if (idx < 0 || idx >= n)
        throw ShapeError("locale index " + std::to_string(idx) + " out of range [0," +
                         std::to_string(n) + ")");
}

std::vector<double> LocaleOneHot::vec() const {
    std::vector<double> v(static_cast<std::size_t>(num_locales), 0.0);
    v[static_cast<std::size_t>(index)] = 1.0;
    return v;
}

namespace {

Tensor init_conv_weight(int k, int cin, int cout, std::uint64_t seed, const std::string& name) {
    Tensor w = Tensor::zeros({k, cin, cout});
    Rng rng(seed, name);
    const int fan_in = k * cin;
    for (double& v : w.data) v = rng.he_uniform(fan_in);
    return w;
}

Tensor init_dense_weight(int din, int dout, std::uint64_t seed, const std::string& name) {
    Tensor w = Tensor::zeros({din, dout});
    Rng rng(seed, name);
    for (double& v : w.data) v = rng.he_uniform(din);
    return w;
}

int decoder_input_width(const ModelConfig& cfg, ConditioningMode mode, int num_locales) {
    return cfg.bottleneck_dim + (mode == ConditioningMode::Concat ? num_locales : 0);
}

}  // namespace

ParameterSet build(const ModelConfig& config, int num_locales, ConditioningMode mode,
                   std::uint64_t seed) {
    config.validate();
    if (num_locales < 1) throw ConfigError("num_locales must be >= 1");

    ParameterSet ps;
    ps.config = config;
    ps.mode = mode;
    ps.num_locales = num_locales;
    ps.seed = seed;

    int cin = config.feature_dim;
    for (int i = 0; i < 4; ++i) {
        const std::string base = "encoder/conv" + std::to_string(i);
        ps.tensors[base + "/weight"] =
            init_conv_weight(config.encoder_kernels[i], cin, config.encoder_channels[i], seed,
                             base + "/weight");
        ps.tensors[base + "/bias"] = Tensor::zeros({config.encoder_channels[i]});
        cin = config.encoder_channels[i];
    }
    ps.tensors["bottleneck/weight"] =
        init_dense_weight(cin, config.bottleneck_dim, seed, "bottleneck/weight");
    ps.tensors["bottleneck/bias"] = Tensor::zeros({config.bottleneck_dim});

    int din = decoder_input_width(config, mode, num_locales);
    for (int i = 0; i < 3; ++i) {
        const std::string base = "decoder/conv" + std::to_string(i);
        ps.tensors[base + "/weight"] =
            init_conv_weight(config.decoder_kernels[i], din, config.decoder_channels[i], seed,
                             base + "/weight");
        ps.tensors[base + "/bias"] = Tensor::zeros({config.decoder_channels[i]});
        din = config.decoder_channels[i];
    }

    if (mode == ConditioningMode::FiLM) {
        // Identity modulation at init: scale rows all ones, shift rows all
        // zeros, so a fresh FiLM model computes the same function as the
        // unconditioned model over the same shared weights.
        Tensor wf = Tensor::zeros({num_locales, config.bottleneck_dim});
        for (double& v : wf.data) v = 1.0;
        ps.tensors["film/scale"] = std::move(wf);
        ps.tensors["film/shift"] = Tensor::zeros({num_locales, config.bottleneck_dim});
    }

    snap_to_f32(ps.tensors);
    return ps;
}

Tensor encoder_forward(const ParameterSet& params, const Tensor& features, ForwardCache* cache) {
    const ModelConfig& cfg = params.config;
    if (features.rank() != 2 || features.dim(1) != cfg.feature_dim)
        throw ShapeError("features must be T x " + std::to_string(cfg.feature_dim) + ", got " +
                         features.shape_str());
    if (cache) cache->input = features;

    Tensor cur = features;
    for (int i = 0; i < 4; ++i) {
        const std::string base = "encoder/conv" + std::to_string(i);
        Tensor pre = conv1d_forward(cur, params.tensors.at(base + "/weight"),
                                    params.tensors.at(base + "/bias"), cfg.encoder_strides[i],
                                    Padding::Same);
        Tensor post = relu(pre);
        if (cache) {
            cache->enc_pre[i] = pre;
            cache->enc_post[i] = post;
        }
        cur = std::move(post);
    }
    Tensor p = dense_forward(cur, params.tensors.at("bottleneck/weight"),
                             params.tensors.at("bottleneck/bias"));
    if (cache) cache->P = p;
    return p;
}

Tensor condition(const Tensor& P, const std::optional<LocaleOneHot>& locale, ConditioningMode mode,
                 const ParameterSet& params) {
    const int t = P.dim(0), m = P.dim(1);
    if (mode == ConditioningMode::None) {
        if (locale) throw ConditioningError("unconditioned model does not accept a locale input");
        return P;
    }
    if (!locale) throw ConditioningError(mode_name(mode) + " conditioning requires a locale input");
    if (locale->num_locales != params.num_locales)
        throw ShapeError("locale one-hot length " + std::to_string(locale->num_locales) +
                         " does not match model locale count " + std::to_string(params.num_locales));

    if (mode == ConditioningMode::Concat) {
        const int n = locale->num_locales;
        Tensor out = Tensor::zeros({t, m + n});
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < m; ++j) out.at(r, j) = P.at(r, j);
            out.at(r, m + locale->index) = 1.0;
        }
        return out;
    }

    // FiLM: gamma = L . Wf (row selection), beta = L . Wh
    const Tensor& wf = params.tensors.at("film/scale");
    const Tensor& wh = params.tensors.at("film/shift");
    if (wf.dim(1) != m) throw ShapeError("film projection width does not match encoder logits");
    Tensor out = Tensor::zeros({t, m});
    const double* gamma = &wf.data[static_cast<std::size_t>(locale->index) * m];
    const double* beta = &wh.data[static_cast<std::size_t>(locale->index) * m];
    for (int r = 0; r < t; ++r) {
        for (int j = 0; j < m; ++j) out.at(r, j) = gamma[j] * P.at(r, j) + beta[j];
    }
    return out;
}

Tensor decoder_forward(const ParameterSet& params, const Tensor& conditioned, ForwardCache* cache) {
    const ModelConfig& cfg = params.config;
    const int expect = cfg.bottleneck_dim +
                       (params.mode == ConditioningMode::Concat ? params.num_locales : 0);
    if (conditioned.rank() != 2 || conditioned.dim(1) != expect)
        throw ShapeError("decoder input width " + std::to_string(conditioned.dim(1)) +
                         " does not match built width " + std::to_string(expect));

    Tensor cur = conditioned;
    for (int i = 0; i < 3; ++i) {
        const std::string base = "decoder/conv" + std::to_string(i);
        Tensor pre = conv1d_forward(cur, params.tensors.at(base + "/weight"),
                                    params.tensors.at(base + "/bias"), cfg.decoder_strides[i],
                                    Padding::Same);
        Tensor post = i < 2 ? relu(pre) : pre;  // final layer emits raw logits
        if (cache) {
            cache->dec_pre[i] = pre;
            cache->dec_post[i] = post;
        }
        cur = std::move(post);
    }
    return cur;
}

ForwardOutput forward(const ParameterSet& params, const Tensor& features,
                      const std::optional<LocaleOneHot>& locale, ForwardCache* cache) {
    ForwardOutput out;
    out.encoder_logits = encoder_forward(params, features, cache);
    Tensor cond = condition(out.encoder_logits, locale, params.mode, params);
    if (cache) {
        cache->conditioned = cond;
        cache->locale = locale;
    }
    out.decoder_logits = decoder_forward(params, cond, cache);
    return out;
}

void model_backward(const ParameterSet& params, const ForwardCache& cache, const Tensor& grad_P_head,
                    const Tensor& grad_decoder_logits, TensorMap& grads) {
    const ModelConfig& cfg = params.config;
    auto acc = [&grads](const std::string& name, const Tensor& g) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            grads[name] = g;
        } else {
            for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
        }
    };

    // decoder
    Tensor up = grad_decoder_logits;
    for (int i = 2; i >= 0; --i) {
        const std::string base = "decoder/conv" + std::to_string(i);
        if (i < 2) up = relu_backward(cache.dec_pre[i], up);
        const Tensor& in = i == 0 ? cache.conditioned : cache.dec_post[i - 1];
        Conv1dGrads cg = conv1d_backward(in, params.tensors.at(base + "/weight"), up,
                                         cfg.decoder_strides[i], Padding::Same);
        acc(base + "/weight", cg.weights);
        acc(base + "/bias", cg.bias);
        up = std::move(cg.input);
    }

    // conditioning
    const int tp = cache.P.dim(0), m = cache.P.dim(1);
    Tensor grad_p = Tensor::zeros({tp, m});
    if (params.mode == ConditioningMode::None) {
        grad_p = up;
    } else if (params.mode == ConditioningMode::Concat) {
        for (int r = 0; r < tp; ++r)
            for (int j = 0; j < m; ++j) grad_p.at(r, j) = up.at(r, j);
        // the appended one-hot columns are constants; their grads vanish
    } else {
        const int l = cache.locale->index;
        const Tensor& wf = params.tensors.at("film/scale");
        Tensor gwf = Tensor::zeros(wf.dims);
        Tensor gwh = Tensor::zeros(wf.dims);
        const double* gamma = &wf.data[static_cast<std::size_t>(l) * m];
        double* gf = &gwf.data[static_cast<std::size_t>(l) * m];
        double* gh = &gwh.data[static_cast<std::size_t>(l) * m];
        for (int r = 0; r < tp; ++r) {
            for (int j = 0; j < m; ++j) {
                const double u = up.at(r, j);
                grad_p.at(r, j) = gamma[j] * u;
                gf[j] += u * cache.P.at(r, j);
                gh[j] += u;
            }
        }
        acc("film/scale", gwf);
        acc("film/shift", gwh);
    }

    if (grad_P_head.rank() > 0) {
        if (!grad_P_head.same_shape(grad_p)) throw ShapeError("encoder head gradient shape mismatch");
        for (std::size_t i = 0; i < grad_p.data.size(); ++i)
            grad_p.data[i] += grad_P_head.data[i];
    }

    // bottleneck
    DenseGrads dg = dense_backward(cache.enc_post[3], params.tensors.at("bottleneck/weight"), grad_p);
    acc("bottleneck/weight", dg.weights);
    acc("bottleneck/bias", dg.bias);
    up = std::move(dg.input);

    // encoder
    for (int i = 3; i >= 0; --i) {
        const std::string base = "encoder/conv" + std::to_string(i);
        up = relu_backward(cache.enc_pre[i], up);
        const Tensor& in = i == 0 ? cache.input : cache.enc_post[i - 1];
        Conv1dGrads cg = conv1d_backward(in, params.tensors.at(base + "/weight"), up,
                                         cfg.encoder_strides[i], Padding::Same);
        acc(base + "/weight", cg.weights);
        acc(base + "/bias", cg.bias);
        up = std::move(cg.input);
    }
}

std::int64_t param_count(const ParameterSet& params) {
    std::int64_t n = 0;
    for (const auto& [name, t] : params.tensors) n += t.size();
    return n;
}

std::int64_t extra_param_count(const ModelConfig& config, int num_locales, ConditioningMode mode) {
    if (num_locales <= 0) return 0;
    switch (mode) {
        case ConditioningMode::None: return 0;
        case ConditioningMode::FiLM:
            return 2LL * config.bottleneck_dim * num_locales;
        case ConditioningMode::Concat:
            // growth of the first decoder conv when its input widens by N
            return static_cast<std::int64_t>(config.decoder_kernels[0]) * num_locales *
                   config.decoder_channels[0];
    }
    throw ConfigError("unknown conditioning mode");
}

namespace {

bool constant_row(const double* row, int n) {
    for (int j = 1; j < n; ++j)
        if (row[j] != row[0]) return false;
    return true;
}

}  // namespace

Tensor locale_similarity(const ParameterSet& params) {
    if (params.mode != ConditioningMode::FiLM)
        throw ConditioningError("locale similarity requires a FiLM parameter set");
    const Tensor& wf = params.tensors.at("film/scale");
    const Tensor& wh = params.tensors.at("film/shift");
    const int n = wf.dim(0), m = wf.dim(1);

    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (int l = 0; l < n; ++l) {
        const double* f = &wf.data[static_cast<std::size_t>(l) * m];
        const double* h = &wh.data[static_cast<std::size_t>(l) * m];
        if (constant_row(f, m) && constant_row(h, m))
            throw NumericError("locale " + std::to_string(l) +
                               " has constant modulation rows; correlation undefined");
        auto& v = rows[static_cast<std::size_t>(l)];
        v.assign(f, f + m);
        v.insert(v.end(), h, h + m);
    }

    const int d = 2 * m;
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0), sd(static_cast<std::size_t>(n), 0.0);
    for (int l = 0; l < n; ++l) {
        double s = 0.0;
        for (double v : rows[static_cast<std::size_t>(l)]) s += v;
        mean[static_cast<std::size_t>(l)] = s / d;
        double ss = 0.0;
        for (double v : rows[static_cast<std::size_t>(l)]) {
            const double c = v - mean[static_cast<std::size_t>(l)];
            ss += c * c;
        }
        sd[static_cast<std::size_t>(l)] = std::sqrt(ss);
        if (sd[static_cast<std::size_t>(l)] == 0.0)
            throw NumericError("locale " + std::to_string(l) +
                               " has a zero-variance row; correlation undefined");
    }

    Tensor out = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
        out.at(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double cov = 0.0;
            for (int k = 0; k < d; ++k) {
                cov += (rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
                        mean[static_cast<std::size_t>(i)]) *
                       (rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] -
                        mean[static_cast<std::size_t>(j)]);
            }
            const double r = cov / (sd[static_cast<std::size_t>(i)] * sd[static_cast<std::size_t>(j)]);
            out.at(i, j) = r;
            out.at(j, i) = r;
        }
    }
    return out;
}

}  // namespace kws
