#include "sft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace sft {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and wire serialization assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', 'W'};
constexpr uint16_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated");
    return v;
}

}  // namespace

void save_checkpoint(const LayerStack& stack, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put(out, kVersion);
    for (const auto& [name, p] : stack.named_params()) {
        if (name.size() > 0xffff) throw std::runtime_error("checkpoint: parameter name too long");
        put(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(out, static_cast<uint32_t>(p->value.rows));
        put(out, static_cast<uint32_t>(p->value.cols));
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(LayerStack& stack, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint " + path + ": bad magic");
    const auto version = get<uint16_t>(in, path);
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                                 std::to_string(version));

    auto params = stack.named_params();
    std::set<std::string> filled;
    while (true) {
        uint16_t name_len;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw std::runtime_error("checkpoint " + path + ": truncated");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = get<uint32_t>(in, path);
        const auto cols = get<uint32_t>(in, path);

        Param* target = nullptr;
        for (auto& [pname, p] : params)
            if (pname == name) target = p;
        if (!target) throw std::runtime_error("checkpoint " + path + ": unknown parameter " + name);
        if (target->value.rows != static_cast<int>(rows) ||
            target->value.cols != static_cast<int>(cols))
            throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + name +
                                     ": file has " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", model has " +
                                     target->value.shape_str());
        in.read(reinterpret_cast<char*>(target->value.data.data()),
                static_cast<std::streamsize>(target->value.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint " + path + ": truncated payload for " + name);
        filled.insert(name);
    }
    for (auto& [pname, p] : params)
        if (!filled.count(pname))
            throw std::runtime_error("checkpoint " + path + ": missing parameter " + pname);
}

}  // namespace sft
