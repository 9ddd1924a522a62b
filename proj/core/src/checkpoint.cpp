#include "finctx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "finctx/error.hpp"

namespace finctx {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<uint64_t>(d)); }

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated checkpoint: " + path);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint: " + path);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is, const std::string& path) { return std::bit_cast<double>(get_u64(is, path)); }

std::string get_str(std::istream& is, const std::string& path) {
    const uint64_t len = get_u64(is, path);
    if (len > (1ull << 32)) throw DataError("corrupt checkpoint string length in " + path);
    std::string s(static_cast<size_t>(len), '\0');
    if (len > 0 && !is.read(s.data(), static_cast<std::streamsize>(len))) {
        throw DataError("truncated checkpoint: " + path);
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<const Parameter*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write("FCTX", 4);
    put_u32(os, kCheckpointVersion);
    put_u64(os, config_json.size());
    os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    put_u64(os, params.size());
    for (const Parameter* p : params) {
        put_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(os, static_cast<uint32_t>(p->value.rank()));
        for (int i = 0; i < p->value.rank(); ++i) put_u32(os, static_cast<uint32_t>(p->value.dim(i)));
        for (int64_t i = 0; i < p->value.numel(); ++i) put_f64(os, p->value.at(static_cast<int>(i)));
    }
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FCTX", 4) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const uint32_t version = get_u32(is, path);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    }
    Checkpoint ckpt;
    ckpt.config_json = get_str(is, path);
    const uint64_t count = get_u64(is, path);
    ckpt.entries.reserve(static_cast<size_t>(count));
    for (uint64_t k = 0; k < count; ++k) {
        CheckpointEntry e;
        e.name = get_str(is, path);
        const uint32_t rank = get_u32(is, path);
        if (rank == 0 || rank > 2) throw DataError("corrupt checkpoint rank for '" + e.name + "' in " + path);
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(get_u32(is, path));
            numel *= shape[i];
        }
        std::vector<double> data(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = get_f64(is, path);
        e.value = Tensor(std::move(shape), std::move(data));
        ckpt.entries.push_back(std::move(e));
    }
    return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    std::unordered_map<std::string, const CheckpointEntry*> by_name;
    for (const CheckpointEntry& e : ckpt.entries) {
        if (!by_name.emplace(e.name, &e).second) {
            throw DataError("duplicate checkpoint entry '" + e.name + "'");
        }
    }
    if (by_name.size() != params.size()) {
        throw DataError("checkpoint has " + std::to_string(by_name.size()) + " entries but model expects " +
                        std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError("checkpoint missing parameter '" + p->name + "'");
        if (!it->second->value.same_shape(p->value)) {
            throw DataError("checkpoint shape " + it->second->value.shape_str() + " for '" + p->name +
                            "' does not match model shape " + p->value.shape_str());
        }
        p->value = it->second->value;
        p->grad = Tensor::zeros(p->value.shape());
    }
}

}  // namespace finctx
