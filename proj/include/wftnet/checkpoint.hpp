#pragma once

// Checkpoint container: 8-byte magic "WFTNET01", a u64-length-prefixed UTF-8
// JSON config block, then every tensor from the canonical parameter walk as
// (u64 name length, name bytes, u64 rank, u64 dims..., raw f64 data), all
// integers and floats little-endian. Writes go through a temp file + rename
// so a crash never leaves a partial checkpoint behind.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace wftnet {

inline constexpr char kCheckpointMagic[8] = {'W', 'F', 'T', 'N', 'E', 'T', '0', '1'};

namespace detail {

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
    put_u64(buf, std::bit_cast<std::uint64_t>(d));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;

    void need(std::size_t n) {
        if (pos_ + n > bytes_.size())
            throw FormatError("checkpoint: truncated file " + path_ + " (needed " +
                              std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ")");
    }
};

inline std::string mode_to_string(Mode m) { return branch_mode_name(m); }

inline Mode mode_from_string(const std::string& s) {
    if (s == "fused") return Mode::fused;
    if (s == "fourier-only") return Mode::fourier_only;
    if (s == "wavelet-only") return Mode::wavelet_only;
    throw ValidationError("checkpoint: unknown mode '" + s + "'");
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"seq_len", cfg.seq_len},
                          {"pred_len", cfg.pred_len},
                          {"channels", cfg.channels},
                          {"embed_dim", cfg.embed_dim},
                          {"num_blocks", cfg.num_blocks},
                          {"top_k", cfg.top_k},
                          {"pwc_exponent", cfg.pwc_exponent},
                          {"pwc_bins", cfg.pwc_bins},
                          {"omega0", cfg.omega0},
                          {"dropout", cfg.dropout},
                          {"mode", mode_to_string(cfg.mode)}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    static const char* keys[] = {"seq_len",  "pred_len",     "channels", "embed_dim",
                                 "num_blocks", "top_k",      "pwc_exponent", "pwc_bins",
                                 "omega0",   "dropout",      "mode"};
    if (!j.is_object()) throw ValidationError("checkpoint: config block is not a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* k : keys)
            if (key == k) { known = true; break; }
        if (!known) throw ValidationError("checkpoint: unknown config key '" + key + "'");
    }
    ModelConfig cfg;
    try {
        cfg.seq_len = j.at("seq_len").get<std::size_t>();
        cfg.pred_len = j.at("pred_len").get<std::size_t>();
        cfg.channels = j.at("channels").get<std::size_t>();
        cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
        cfg.num_blocks = j.at("num_blocks").get<std::size_t>();
        cfg.top_k = j.at("top_k").get<std::size_t>();
        cfg.pwc_exponent = j.at("pwc_exponent").get<double>();
        cfg.pwc_bins = j.at("pwc_bins").get<std::size_t>();
        cfg.omega0 = j.at("omega0").get<double>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad config block: ") + e.what());
    }
    return cfg;
}

} // namespace detail

// Atomic write helper shared with the CSV emitters: stage to a sibling temp
// file, then rename over the destination.
inline void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& path) {
    const std::string config_json = detail::config_to_json(cfg).dump();
    std::string buf;
    buf.reserve(1 << 16);
    buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u64(buf, config_json.size());
    buf.append(config_json);
    for_each_param(params, [&buf](const std::string& name, const Tensor& t, bool) {
        detail::put_u64(buf, name.size());
        buf.append(name);
        detail::put_u64(buf, t.rank());
        for (std::size_t d : t.shape) detail::put_u64(buf, d);
        for (double v : t.data) detail::put_f64(buf, v);
    });
    write_file_atomic(path, buf);
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    detail::Reader r(bytes, path);
    const std::string magic = r.str(sizeof(kCheckpointMagic));
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw FormatError("checkpoint: bad magic or unsupported version in " + path);
    const std::uint64_t json_len = r.u64();
    const std::string config_json = r.str(json_len);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: unparsable config block: ") + e.what());
    }
    ModelConfig cfg = detail::config_from_json(j);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ValidationError(std::string("checkpoint: stored config invalid: ") + e.what());
    }

    ModelParams params = zero_model_params(cfg);
    for_each_param(params, [&r, &path](const std::string& name, Tensor& t, bool) {
        const std::uint64_t name_len = r.u64();
        const std::string stored = r.str(name_len);
        if (stored != name)
            throw ValidationError("checkpoint: expected parameter '" + name + "', found '" +
                                  stored + "' in " + path);
        const std::uint64_t rank = r.u64();
        if (rank != t.rank())
            throw ValidationError("checkpoint: parameter '" + name + "' has rank " +
                                  std::to_string(rank) + ", config implies " +
                                  std::to_string(t.rank()));
        Shape dims(rank);
        for (std::uint64_t i = 0; i < rank; ++i) dims[i] = r.u64();
        if (dims != t.shape)
            throw ValidationError("checkpoint: parameter '" + name + "' has shape " +
                                  shape_str(dims) + ", config implies " + shape_str(t.shape));
        for (double& v : t.data) v = r.f64();
    });
    if (!r.at_end())
        throw FormatError("checkpoint: trailing bytes after parameters in " + path);
    return {std::move(params), cfg};
}

} // namespace wftnet
