#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sft/decompose.hpp"
#include "sft/matrix.hpp"
#include "sft/transport.hpp"

namespace sft {

// Wire format (little-endian): magic "SFT1", msg_type u8, iteration u64,
// ndim u8, dims ndim x u32, payload_len u32, payload, crc32(payload) u32.
// Tensor payloads are row-major single precision; LABELS payloads are u32 ids.
enum class MsgType : uint8_t {
    hello = 1,
    config_ack = 2,
    activation = 3,
    labels = 4,
    gradient = 5,
    metrics = 6,
    residual = 7,
    shutdown = 8,
};

const char* msg_type_name(MsgType t);

struct Frame {
    MsgType type = MsgType::shutdown;
    uint64_t iteration = 0;
    std::vector<uint32_t> dims;
    std::vector<uint8_t> payload;

    size_t encoded_size() const { return 22 + 4 * dims.size() + payload.size(); }
};

enum class WireErrc {
    bad_magic,
    unknown_type,
    checksum_mismatch,
    truncated,
    protocol,          // unexpected frame type or iteration id
    version_mismatch,  // handshake
    config_mismatch,   // handshake; message names the offending field
};

class WireError : public std::runtime_error {
  public:
    WireError(WireErrc kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    WireErrc kind() const { return kind_; }

  private:
    WireErrc kind_;
};

uint32_t crc32(const uint8_t* data, size_t len);

std::vector<uint8_t> encode_frame(const Frame& f);
Frame decode_frame(const std::vector<uint8_t>& bytes);  // must consume the whole buffer

// Tensor and label helpers; payload length is validated against dims.
Frame make_matrix_frame(MsgType type, uint64_t iteration, const Matrix& m);
Matrix matrix_from_frame(const Frame& f);
Frame make_labels_frame(uint64_t iteration, const std::vector<int>& labels);
std::vector<int> labels_from_frame(const Frame& f);

// Sender-side token bucket: cumulative send time never drops below
// cumulative_bytes * 8 / bandwidth, paced on a monotonic clock.
class Throttle {
  public:
    explicit Throttle(std::optional<double> bandwidth_bps);
    void pace(size_t bytes);  // sleeps as needed; no-op when unset

  private:
    std::optional<double> bps_;
    std::optional<std::chrono::steady_clock::time_point> deadline_;
};

// Frame I/O over a Transport plus byte accounting and throttling; exactly one
// logical thread uses a channel.
class FrameChannel {
  public:
    explicit FrameChannel(Transport& t, std::optional<double> bandwidth_bps = std::nullopt);

    size_t send(const Frame& f);  // returns exact wire bytes
    Frame recv();

    // recv() that enforces the per-iteration state machine.
    Frame expect(MsgType type, uint64_t iteration);

    uint64_t bytes_sent() const { return transport_.bytes_sent(); }
    uint64_t bytes_received() const { return transport_.bytes_received(); }

    Transport& transport() { return transport_; }

  private:
    Transport& transport_;
    Throttle throttle_;
};

constexpr uint16_t kProtocolVersion = 1;
constexpr int kDefaultPort = 7631;

// Negotiated before any tensor traffic; both sides must agree on every field.
struct SessionConfig {
    uint64_t config_hash = 0;  // ModelConfig::hash()
    SplitPlan plan;
    uint32_t batch = 0;
    uint32_t seq = 0;
    uint16_t version = kProtocolVersion;
};

// Edge sends HELLO(cfg); cloud answers CONFIG_ACK or a rejection naming the
// first mismatching field. KeptLocal plans are rejected outright.
SessionConfig handshake_edge(FrameChannel& chan, const SessionConfig& cfg);
SessionConfig handshake_cloud(FrameChannel& chan, const SessionConfig& cfg);

}  // namespace sft
