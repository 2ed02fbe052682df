#include "kws/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <vector>

namespace kws {

namespace {

using nlohmann::json;

void put_u16(std::vector<unsigned char>& buf, std::uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<unsigned char>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    std::string file;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw FormatError("truncated checkpoint file '" + file + "' at offset " +
                              std::to_string(pos));
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(&buf[pos]), n);
        pos += n;
        return s;
    }
};

void append_tensor(std::vector<unsigned char>& payload, const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw FormatError("tensor name too long: " + name);
    put_u16(payload, static_cast<std::uint16_t>(name.size()));
    payload.insert(payload.end(), name.begin(), name.end());
    payload.push_back(static_cast<unsigned char>(t.rank()));
    for (int d : t.dims) put_u32(payload, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f32(payload, static_cast<float>(v));
}

Tensor text_tensor(const std::string& text) {
    Tensor t = Tensor::zeros({static_cast<int>(text.size())});
    for (std::size_t i = 0; i < text.size(); ++i)
        t.data[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
    return t;
}

std::string tensor_text(const Tensor& t) {
    std::string s;
    s.reserve(t.data.size());
    for (double v : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    return s;
}

json config_to_json(const ModelConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"encoder_channels", c.encoder_channels},
                {"encoder_kernels", c.encoder_kernels},
                {"encoder_strides", c.encoder_strides},
                {"decoder_channels", c.decoder_channels},
                {"decoder_kernels", c.decoder_kernels},
                {"decoder_strides", c.decoder_strides},
                {"bottleneck_dim", c.bottleneck_dim},
                {"num_decoder_classes", c.num_decoder_classes},
                {"size_preset", preset_name(c.size_preset)}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.feature_dim = j.at("feature_dim");
    c.encoder_channels = j.at("encoder_channels");
    c.encoder_kernels = j.at("encoder_kernels");
    c.encoder_strides = j.at("encoder_strides");
    c.decoder_channels = j.at("decoder_channels");
    c.decoder_kernels = j.at("decoder_kernels");
    c.decoder_strides = j.at("decoder_strides");
    c.bottleneck_dim = j.at("bottleneck_dim");
    c.num_decoder_classes = j.at("num_decoder_classes");
    c.size_preset = preset_from_name(j.at("size_preset"));
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json meta = {{"config", config_to_json(ckpt.params.config)},
                 {"mode", mode_name(ckpt.params.mode)},
                 {"num_locales", ckpt.params.num_locales},
                 {"seed", ckpt.params.seed},
                 {"regime", ckpt.params.regime}};
    if (ckpt.adam) {
        meta["adam"] = {{"step", ckpt.adam->step},
                        {"lr", ckpt.adam->cfg.lr},
                        {"beta1", ckpt.adam->cfg.beta1},
                        {"beta2", ckpt.adam->cfg.beta2},
                        {"epsilon", ckpt.adam->cfg.epsilon}};
    }

    std::uint32_t count = 1 + static_cast<std::uint32_t>(ckpt.params.tensors.size());
    if (ckpt.adam) count += static_cast<std::uint32_t>(ckpt.adam->m.size() + ckpt.adam->v.size());

    std::vector<unsigned char> payload;
    put_u32(payload, count);
    append_tensor(payload, "__meta__", text_tensor(meta.dump()));
    for (const auto& [name, t] : ckpt.params.tensors) append_tensor(payload, name, t);
    if (ckpt.adam) {
        for (const auto& [name, t] : ckpt.adam->m) append_tensor(payload, "__adam_m__/" + name, t);
        for (const auto& [name, t] : ckpt.adam->v) append_tensor(payload, "__adam_v__/" + name, t);
    }

    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, payload.data(), static_cast<uInt>(payload.size())));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open checkpoint file '" + path + "' for writing");
    const char magic[4] = {'K', 'W', 'S', 'C'};
    const std::uint32_t version = 1;
    unsigned char vbuf[4];
    for (int i = 0; i < 4; ++i) vbuf[i] = static_cast<unsigned char>((version >> (8 * i)) & 0xff);
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(vbuf), 4);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    unsigned char cbuf[4];
    for (int i = 0; i < 4; ++i) cbuf[i] = static_cast<unsigned char>((crc >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(cbuf), 4);
    if (!out) throw FormatError("write failed for checkpoint file '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint file '" + path + "'");
    std::vector<unsigned char> all((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (all.size() < 12) throw FormatError("truncated checkpoint file '" + path + "'");
    if (std::memcmp(all.data(), "KWSC", 4) != 0)
        throw FormatError("bad magic in checkpoint file '" + path + "'");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(all[4 + i]) << (8 * i);
    if (version != 1)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in '" +
                          path + "'");

    std::vector<unsigned char> payload(all.begin() + 8, all.end() - 4);
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(all[all.size() - 4 + i]) << (8 * i);
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, payload.data(), static_cast<uInt>(payload.size())));
    if (crc != stored_crc)
        throw FormatError("CRC mismatch in checkpoint file '" + path + "'");

    Reader rd{payload, 0, path};
    const std::uint32_t count = rd.u32();
    TensorMap tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t nlen = rd.u16();
        std::string name = rd.str(nlen);
        const int rank = rd.u8();
        std::vector<int> dims;
        std::int64_t n = 1;
        for (int d = 0; d < rank; ++d) {
            dims.push_back(static_cast<int>(rd.u32()));
            n *= dims.back();
        }
        Tensor t = Tensor::zeros(dims);
        for (std::int64_t k = 0; k < n; ++k) t.data[static_cast<std::size_t>(k)] = rd.f32();
        tensors[name] = std::move(t);
    }
    if (rd.pos != payload.size())
        throw FormatError("trailing bytes in checkpoint file '" + path + "'");

    auto meta_it = tensors.find("__meta__");
    if (meta_it == tensors.end())
        throw FormatError("checkpoint file '" + path + "' is missing __meta__");
    json meta = json::parse(tensor_text(meta_it->second));
    tensors.erase(meta_it);

    Checkpoint ckpt;
    ckpt.params.config = config_from_json(meta.at("config"));
    ckpt.params.mode = mode_from_name(meta.at("mode"));
    ckpt.params.num_locales = meta.at("num_locales");
    ckpt.params.seed = meta.at("seed");
    ckpt.params.regime = meta.at("regime");

    if (meta.contains("adam")) {
        AdamState st;
        st.step = meta["adam"].at("step");
        st.cfg.lr = meta["adam"].at("lr");
        st.cfg.beta1 = meta["adam"].at("beta1");
        st.cfg.beta2 = meta["adam"].at("beta2");
        st.cfg.epsilon = meta["adam"].at("epsilon");
        ckpt.adam = std::move(st);
    }

    for (auto& [name, t] : tensors) {
        if (name.rfind("__adam_m__/", 0) == 0) {
            if (!ckpt.adam) throw FormatError("adam moments without adam metadata in '" + path + "'");
            ckpt.adam->m[name.substr(11)] = std::move(t);
        } else if (name.rfind("__adam_v__/", 0) == 0) {
            if (!ckpt.adam) throw FormatError("adam moments without adam metadata in '" + path + "'");
            ckpt.adam->v[name.substr(11)] = std::move(t);
        } else {
            ckpt.params.tensors[name] = std::move(t);
        }
    }
    return ckpt;
}

}  // namespace kws
