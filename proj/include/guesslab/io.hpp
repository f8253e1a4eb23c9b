#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "guesslab/error.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/param.hpp"
#include "guesslab/world.hpp"

namespace guesslab::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// small file helpers

inline void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

// ---------------------------------------------------------------------------
// JSON lines

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad json line (" +
                            e.what() + ")");
        }
    }
    return out;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& lines) {
    std::string buf;
    for (const auto& j : lines) {
        buf += j.dump();
        buf += '\n';
    }
    write_file(path, buf);
}

// game logs -------------------------------------------------------------

inline void write_games(const std::string& path, const std::vector<lingo::Dialogue>& games,
                        uint64_t config_digest) {
    std::vector<json> lines;
    lines.reserve(games.size());
    char digest[20];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(config_digest));
    for (const auto& g : games) {
        json j = lingo::dialogue_to_json(g);
        j["config_digest"] = digest;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, lines);
}

inline std::vector<lingo::Dialogue> read_games(const std::string& path) {
    std::vector<lingo::Dialogue> out;
    std::size_t lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        ++lineno;
        try {
            out.push_back(lingo::dialogue_from_json(j));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad game line (" +
                            e.what() + ")");
        }
    }
    return out;
}

// scene corpus ----------------------------------------------------------

inline void write_scenes(const std::string& path, const std::vector<world::Scene>& scenes,
                         const world::Canvas& canvas, uint64_t config_digest) {
    std::vector<json> lines;
    lines.reserve(scenes.size());
    char digest[20];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(config_digest));
    for (const auto& s : scenes) {
        json j = world::scene_to_json(s, canvas);
        j["config_digest"] = digest;
        lines.push_back(std::move(j));
    }
    write_jsonl(path, lines);
}

inline std::vector<world::Scene> read_scenes(const std::string& path) {
    std::vector<world::Scene> out;
    std::size_t lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        ++lineno;
        try {
            out.push_back(world::scene_from_json(j));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad scene line (" +
                            e.what() + ")");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic "GDSE", version u32, config digest u64,
// meta json, then per-param records
//   name_len u32 | name | dtype u8 (0=f64, 1=f32) | rank u32 | dims u64[rank]
//   | row-major payload | step_count u64 | adam_m payload | adam_v payload
// All integers little-endian. Reader and writer round-trip bit-exactly.

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size()) throw DataError("checkpoint truncated");
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    std::string get_bytes(std::size_t n) {
        if (pos + n > buf.size()) throw DataError("checkpoint truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_tensor(std::string& buf, const Tensor& t, bool f32) {
    if (f32) {
        for (std::size_t i = 0; i < t.size(); ++i) put(buf, static_cast<float>(t[i]));
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) put(buf, t[i]);
    }
}

inline Tensor get_tensor(Reader& r, const std::vector<std::size_t>& shape, bool f32) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = f32 ? static_cast<double>(r.get<float>()) : r.get<double>();
    return t;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'G', 'D', 'S', 'E'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Each store is written under "<store name>/<param name>". Store RNG states
// ride along in the meta json so a ParamStore round-trips losslessly.
inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                            uint64_t config_digest, json meta = json::object(),
                            bool f32 = false) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    detail::put<uint32_t>(buf, kCheckpointVersion);
    detail::put<uint64_t>(buf, config_digest);

    json rng_states = json::object();
    std::size_t n_params = 0;
    for (const auto& [name, store] : stores) {
        n_params += store->size();
        json state = json::array();
        char hex[20];
        for (uint64_t word : store->rng().state()) {
            std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(word));
            state.push_back(std::string(hex));
        }
        rng_states[name] = state;
    }
    meta["rng_states"] = rng_states;

    const std::string meta_str = meta.dump();
    detail::put<uint32_t>(buf, static_cast<uint32_t>(meta_str.size()));
    buf += meta_str;

    detail::put<uint64_t>(buf, n_params);
    for (const auto& [store_name, store] : stores) {
        for (const auto& p : store->params()) {
            const std::string full = store_name + "/" + p.name;
            detail::put<uint32_t>(buf, static_cast<uint32_t>(full.size()));
            buf += full;
            detail::put<uint8_t>(buf, f32 ? 1 : 0);
            detail::put<uint32_t>(buf, static_cast<uint32_t>(p.value.rank()));
            for (std::size_t d : p.value.shape()) detail::put<uint64_t>(buf, d);
            detail::put_tensor(buf, p.value, f32);
            detail::put<uint64_t>(buf, p.step_count);
            detail::put_tensor(buf, p.adam_m, f32);
            detail::put_tensor(buf, p.adam_v, f32);
        }
    }
    write_file(path, buf);
}

struct CheckpointHeader {
    uint32_t version = 0;
    uint64_t config_digest = 0;
    json meta;
};

// Loads matching params into the given stores; throws on missing params or
// shape mismatches.
inline CheckpointHeader load_checkpoint(const std::string& path,
                                        std::vector<std::pair<std::string, ParamStore*>> stores) {
    const std::string buf = read_file(path);
    detail::Reader r{buf};
    if (r.get_bytes(4) != std::string(kCheckpointMagic, 4))
        throw DataError(path + ": not a checkpoint (bad magic)");
    CheckpointHeader header;
    header.version = r.get<uint32_t>();
    if (header.version != kCheckpointVersion)
        throw DataError(path + ": unsupported checkpoint version " +
                        std::to_string(header.version));
    header.config_digest = r.get<uint64_t>();
    const uint32_t meta_len = r.get<uint32_t>();
    header.meta = json::parse(r.get_bytes(meta_len));

    std::map<std::string, ParamStore*> by_name(stores.begin(), stores.end());
    const uint64_t n_params = r.get<uint64_t>();
    std::size_t loaded = 0;
    for (uint64_t i = 0; i < n_params; ++i) {
        const uint32_t name_len = r.get<uint32_t>();
        const std::string full = r.get_bytes(name_len);
        const bool f32 = r.get<uint8_t>() != 0;
        const uint32_t rank = r.get<uint32_t>();
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<uint64_t>());
        Tensor value = detail::get_tensor(r, shape, f32);
        const uint64_t step_count = r.get<uint64_t>();
        Tensor m = detail::get_tensor(r, shape, f32);
        Tensor v = detail::get_tensor(r, shape, f32);

        const auto slash = full.find('/');
        if (slash == std::string::npos) throw DataError(path + ": bad param name " + full);
        auto it = by_name.find(full.substr(0, slash));
        if (it == by_name.end()) continue;  // store not requested
        Param& p = it->second->get(full.substr(slash + 1));
        if (p.value.shape() != value.shape())
            throw DataError(path + ": shape mismatch for " + full + ": checkpoint " +
                            value.shape_string() + " vs model " + p.value.shape_string());
        p.value = std::move(value);
        p.adam_m = std::move(m);
        p.adam_v = std::move(v);
        p.step_count = step_count;
        ++loaded;
    }

    // restore RNG states
    if (header.meta.contains("rng_states")) {
        for (auto& [name, store] : stores) {
            if (!header.meta["rng_states"].contains(name)) continue;
            std::array<uint64_t, 4> state{};
            const auto& arr = header.meta["rng_states"][name];
            for (int k = 0; k < 4; ++k)
                state[k] = std::stoull(arr.at(k).get<std::string>(), nullptr, 16);
            store->rng().set_state(state);
        }
    }

    std::size_t expected = 0;
    for (auto& [name, store] : stores) expected += store->size();
    if (loaded != expected)
        throw DataError(path + ": loaded " + std::to_string(loaded) + " params, model needs " +
                        std::to_string(expected));
    return header;
}

// Header plus tensor inventory, for the inspect command.
inline json inspect_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    detail::Reader r{buf};
    if (r.get_bytes(4) != std::string(kCheckpointMagic, 4))
        throw DataError(path + ": not a checkpoint (bad magic)");
    json out;
    out["version"] = r.get<uint32_t>();
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(r.get<uint64_t>()));
    out["config_digest"] = hex;
    const uint32_t meta_len = r.get<uint32_t>();
    out["meta"] = json::parse(r.get_bytes(meta_len));
    const uint64_t n_params = r.get<uint64_t>();
    json params = json::array();
    for (uint64_t i = 0; i < n_params; ++i) {
        const uint32_t name_len = r.get<uint32_t>();
        json rec;
        rec["name"] = r.get_bytes(name_len);
        const bool f32 = r.get<uint8_t>() != 0;
        rec["dtype"] = f32 ? "f32" : "f64";
        const uint32_t rank = r.get<uint32_t>();
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.get<uint64_t>());
            count *= d;
        }
        rec["shape"] = shape;
        rec["elements"] = count;
        const std::size_t payload = count * (f32 ? 4 : 8);
        r.get_bytes(payload);                  // value
        rec["step_count"] = r.get<uint64_t>();
        r.get_bytes(2 * payload);              // adam m, v
        params.push_back(std::move(rec));
    }
    out["params"] = params;
    return out;
}

// ---------------------------------------------------------------------------
// CSV with a digest column; values print at full precision.

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (i) buf_ += ',';
            buf_ += columns_[i];
        }
        buf_ += '\n';
    }

    void row(const std::vector<std::string>& values) {
        if (values.size() != columns_.size())
            throw DataError("csv row width mismatch: " + std::to_string(values.size()) + " vs " +
                            std::to_string(columns_.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) buf_ += ',';
            buf_ += values[i];
        }
        buf_ += '\n';
    }

    const std::string& str() const { return buf_; }

    static std::string num(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

private:
    std::vector<std::string> columns_;
    std::string buf_;
};

}  // namespace guesslab::io
