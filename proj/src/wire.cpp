#include "sft/wire.hpp"

#include <array>
#include <cstring>
#include <thread>

namespace sft {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', '1'};

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> table{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const uint8_t* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

bool valid_msg_type(uint8_t t) { return t >= 1 && t <= 8; }

uint64_t dims_product(const std::vector<uint32_t>& dims) {
    uint64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
}

}  // namespace

const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::hello: return "HELLO";
        case MsgType::config_ack: return "CONFIG_ACK";
        case MsgType::activation: return "ACTIVATION";
        case MsgType::labels: return "LABELS";
        case MsgType::gradient: return "GRADIENT";
        case MsgType::metrics: return "METRICS";
        case MsgType::residual: return "RESIDUAL";
        case MsgType::shutdown: return "SHUTDOWN";
    }
    return "?";
}

uint32_t crc32(const uint8_t* data, size_t len) {
    static const std::array<uint32_t, 256> table = make_crc_table();
    uint32_t c = 0xffffffffu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

std::vector<uint8_t> encode_frame(const Frame& f) {
    std::vector<uint8_t> out;
    out.reserve(f.encoded_size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<uint8_t>(f.type));
    put_le(out, f.iteration);
    out.push_back(static_cast<uint8_t>(f.dims.size()));
    for (uint32_t d : f.dims) put_le(out, d);
    put_le(out, static_cast<uint32_t>(f.payload.size()));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    put_le(out, crc32(f.payload.data(), f.payload.size()));
    return out;
}

Frame decode_frame(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 14) throw WireError(WireErrc::truncated, "frame shorter than fixed header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw WireError(WireErrc::bad_magic, "bad frame magic");
    const uint8_t type = bytes[4];
    if (!valid_msg_type(type))
        throw WireError(WireErrc::unknown_type, "unknown msg_type " + std::to_string(type));
    Frame f;
    f.type = static_cast<MsgType>(type);
    f.iteration = get_le<uint64_t>(bytes.data() + 5);
    const uint8_t ndim = bytes[13];
    size_t off = 14;
    if (bytes.size() < off + 4 * static_cast<size_t>(ndim) + 4)
        throw WireError(WireErrc::truncated, "frame truncated in dims");
    f.dims.resize(ndim);
    for (uint8_t i = 0; i < ndim; ++i, off += 4) f.dims[i] = get_le<uint32_t>(bytes.data() + off);
    const uint32_t payload_len = get_le<uint32_t>(bytes.data() + off);
    off += 4;
    if (bytes.size() != off + payload_len + 4)
        throw WireError(WireErrc::truncated,
                        "frame length mismatch: have " + std::to_string(bytes.size()) +
                            " bytes, need " + std::to_string(off + payload_len + 4));
    f.payload.assign(bytes.begin() + static_cast<long>(off),
                     bytes.begin() + static_cast<long>(off + payload_len));
    const uint32_t stated = get_le<uint32_t>(bytes.data() + off + payload_len);
    const uint32_t actual = crc32(f.payload.data(), f.payload.size());
    if (stated != actual)
        throw WireError(WireErrc::checksum_mismatch,
                        "payload checksum mismatch on " + std::string(msg_type_name(f.type)));
    return f;
}

Frame make_matrix_frame(MsgType type, uint64_t iteration, const Matrix& m) {
    Frame f;
    f.type = type;
    f.iteration = iteration;
    f.dims = {static_cast<uint32_t>(m.rows), static_cast<uint32_t>(m.cols)};
    f.payload.resize(m.size() * sizeof(float));
    std::memcpy(f.payload.data(), m.data.data(), f.payload.size());
    return f;
}

Matrix matrix_from_frame(const Frame& f) {
    if (f.dims.size() != 2)
        throw WireError(WireErrc::protocol, std::string(msg_type_name(f.type)) +
                                                " frame is not 2-dimensional");
    if (f.payload.size() != dims_product(f.dims) * sizeof(float))
        throw WireError(WireErrc::protocol, std::string(msg_type_name(f.type)) +
                                                " payload length does not match dims");
    Matrix m(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]));
    std::memcpy(m.data.data(), f.payload.data(), f.payload.size());
    return m;
}

Frame make_labels_frame(uint64_t iteration, const std::vector<int>& labels) {
    Frame f;
    f.type = MsgType::labels;
    f.iteration = iteration;
    f.dims = {static_cast<uint32_t>(labels.size())};
    f.payload.reserve(labels.size() * 4);
    for (int v : labels) put_le(f.payload, static_cast<uint32_t>(v));
    return f;
}

std::vector<int> labels_from_frame(const Frame& f) {
    if (f.dims.size() != 1 || f.payload.size() != static_cast<size_t>(f.dims[0]) * 4)
        throw WireError(WireErrc::protocol, "malformed LABELS frame");
    std::vector<int> out(f.dims[0]);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<int>(get_le<uint32_t>(f.payload.data() + 4 * i));
    return out;
}

// ---------------------------------------------------------------------------
// throttle and channel
// ---------------------------------------------------------------------------

Throttle::Throttle(std::optional<double> bandwidth_bps) : bps_(bandwidth_bps) {
    if (bps_ && *bps_ <= 0.0)
        throw std::invalid_argument("Throttle: bandwidth must be positive when set");
}

void Throttle::pace(size_t bytes) {
    if (!bps_) return;
    const auto now = std::chrono::steady_clock::now();
    const auto start = deadline_ && *deadline_ > now ? *deadline_ : now;
    const auto cost = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(static_cast<double>(bytes) * 8.0 / *bps_));
    deadline_ = start + cost;
    std::this_thread::sleep_until(*deadline_);
}

FrameChannel::FrameChannel(Transport& t, std::optional<double> bandwidth_bps)
    : transport_(t), throttle_(bandwidth_bps) {}

size_t FrameChannel::send(const Frame& f) {
    const std::vector<uint8_t> bytes = encode_frame(f);
    transport_.send_bytes(bytes.data(), bytes.size());
    throttle_.pace(bytes.size());
    return bytes.size();
}

Frame FrameChannel::recv() {
    uint8_t fixed[14];
    transport_.recv_bytes(fixed, sizeof(fixed));
    if (std::memcmp(fixed, kMagic, 4) != 0)
        throw WireError(WireErrc::bad_magic, "bad frame magic");
    if (!valid_msg_type(fixed[4]))
        throw WireError(WireErrc::unknown_type, "unknown msg_type " + std::to_string(fixed[4]));
    Frame f;
    f.type = static_cast<MsgType>(fixed[4]);
    f.iteration = get_le<uint64_t>(fixed + 5);
    f.dims.resize(fixed[13]);
    for (auto& d : f.dims) {
        uint8_t raw[4];
        transport_.recv_bytes(raw, 4);
        d = get_le<uint32_t>(raw);
    }
    uint8_t raw_len[4];
    transport_.recv_bytes(raw_len, 4);
    const uint32_t payload_len = get_le<uint32_t>(raw_len);
    f.payload.resize(payload_len);
    if (payload_len > 0) transport_.recv_bytes(f.payload.data(), payload_len);
    uint8_t raw_crc[4];
    transport_.recv_bytes(raw_crc, 4);
    if (get_le<uint32_t>(raw_crc) != crc32(f.payload.data(), f.payload.size()))
        throw WireError(WireErrc::checksum_mismatch,
                        "payload checksum mismatch on " + std::string(msg_type_name(f.type)));
    return f;
}

Frame FrameChannel::expect(MsgType type, uint64_t iteration) {
    Frame f = recv();
    if (f.type != type)
        throw WireError(WireErrc::protocol, "expected " + std::string(msg_type_name(type)) +
                                                ", got " + msg_type_name(f.type));
    if (f.iteration != iteration)
        throw WireError(WireErrc::protocol,
                        std::string(msg_type_name(type)) + " iteration " +
                            std::to_string(f.iteration) + " out of order (expected " +
                            std::to_string(iteration) + ")");
    return f;
}

// ---------------------------------------------------------------------------
// handshake
// ---------------------------------------------------------------------------

namespace {

std::vector<uint8_t> encode_session(const SessionConfig& cfg) {
    std::vector<uint8_t> out;
    put_le(out, cfg.version);
    put_le(out, cfg.config_hash);
    put_le(out, static_cast<uint32_t>(cfg.plan.split_layer));
    put_le(out, static_cast<uint32_t>(cfg.plan.rank));
    out.push_back(static_cast<uint8_t>(cfg.plan.residual_mode));
    put_le(out, cfg.batch);
    put_le(out, cfg.seq);
    return out;
}

SessionConfig decode_session(const std::vector<uint8_t>& p) {
    if (p.size() != 27) throw WireError(WireErrc::protocol, "malformed HELLO payload");
    SessionConfig cfg;
    cfg.version = get_le<uint16_t>(p.data());
    cfg.config_hash = get_le<uint64_t>(p.data() + 2);
    cfg.plan.split_layer = static_cast<int>(get_le<uint32_t>(p.data() + 10));
    cfg.plan.rank = static_cast<int>(get_le<uint32_t>(p.data() + 14));
    cfg.plan.residual_mode = static_cast<ResidualMode>(p[18]);
    cfg.batch = get_le<uint32_t>(p.data() + 19);
    cfg.seq = get_le<uint32_t>(p.data() + 23);
    return cfg;
}

// First mismatching field, checked in a fixed order; empty string on match.
std::string session_mismatch(const SessionConfig& mine, const SessionConfig& theirs) {
    if (mine.version != theirs.version) return "version";
    if (mine.config_hash != theirs.config_hash) return "model_config";
    if (mine.plan.split_layer != theirs.plan.split_layer) return "split_layer";
    if (mine.plan.rank != theirs.plan.rank) return "rank";
    if (mine.plan.residual_mode != theirs.plan.residual_mode) return "residual_mode";
    if (mine.batch != theirs.batch) return "batch";
    if (mine.seq != theirs.seq) return "seq";
    return "";
}

}  // namespace

SessionConfig handshake_edge(FrameChannel& chan, const SessionConfig& cfg) {
    if (cfg.plan.residual_mode == ResidualMode::kept_local)
        throw WireError(WireErrc::config_mismatch,
                        "handshake: kept_local plans are local-simulation only");
    Frame hello;
    hello.type = MsgType::hello;
    hello.payload = encode_session(cfg);
    chan.send(hello);

    const Frame ack = chan.expect(MsgType::config_ack, 0);
    if (ack.payload.empty()) throw WireError(WireErrc::protocol, "empty CONFIG_ACK");
    if (ack.payload[0] != 1) {
        const std::string reason(ack.payload.begin() + 1, ack.payload.end());
        throw WireError(reason == "version" ? WireErrc::version_mismatch : WireErrc::config_mismatch,
                        "handshake rejected by cloud: " + reason);
    }
    return cfg;
}

SessionConfig handshake_cloud(FrameChannel& chan, const SessionConfig& cfg) {
    const Frame hello = chan.expect(MsgType::hello, 0);
    const SessionConfig theirs = decode_session(hello.payload);

    std::string reason = session_mismatch(cfg, theirs);
    if (reason.empty() && theirs.plan.residual_mode == ResidualMode::kept_local)
        reason = "residual_mode";

    Frame ack;
    ack.type = MsgType::config_ack;
    ack.payload.push_back(reason.empty() ? 1 : 0);
    ack.payload.insert(ack.payload.end(), reason.begin(), reason.end());
    chan.send(ack);

    if (!reason.empty())
        throw WireError(reason == "version" ? WireErrc::version_mismatch : WireErrc::config_mismatch,
                        "handshake rejected: " + reason);
    return cfg;
}

}  // namespace sft
