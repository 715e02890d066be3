#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace sft {

// Peer closed the stream; iteration loops treat this as a clean shutdown
// signal rather than a protocol failure.
class TransportClosed : public std::runtime_error {
  public:
    explicit TransportClosed(const std::string& what) : std::runtime_error(what) {}
};

// Blocking byte stream used by exactly one logical thread per side.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual void send_bytes(const void* data, size_t len) = 0;
    virtual void recv_bytes(void* data, size_t len) = 0;  // exact read; throws TransportClosed at EOF
    virtual void close() = 0;

    uint64_t bytes_sent() const { return bytes_sent_; }
    uint64_t bytes_received() const { return bytes_received_; }

  protected:
    uint64_t bytes_sent_ = 0;
    uint64_t bytes_received_ = 0;
};

namespace detail {
struct BytePipe {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<uint8_t> buf;
    bool closed = false;
};
}  // namespace detail

// In-memory duplex pipe; the loopback analog of a socket. Frames cross it
// bit-identical to the TCP path.
class LoopbackTransport : public Transport {
  public:
    LoopbackTransport(std::shared_ptr<detail::BytePipe> in, std::shared_ptr<detail::BytePipe> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~LoopbackTransport() override;

    void send_bytes(const void* data, size_t len) override;
    void recv_bytes(void* data, size_t len) override;
    void close() override;

  private:
    std::shared_ptr<detail::BytePipe> in_;
    std::shared_ptr<detail::BytePipe> out_;
};

std::pair<std::unique_ptr<LoopbackTransport>, std::unique_ptr<LoopbackTransport>>
make_loopback_pair();

// Blocking TCP stream; the cloud listens, the edge connects.
class TcpTransport : public Transport {
  public:
    static std::unique_ptr<TcpTransport> connect(const std::string& host, int port,
                                                 int timeout_ms);
    static std::unique_ptr<TcpTransport> listen_accept_one(const std::string& bind_addr, int port);

    explicit TcpTransport(int fd) : fd_(fd) {}
    ~TcpTransport() override;

    void send_bytes(const void* data, size_t len) override;
    void recv_bytes(void* data, size_t len) override;
    void close() override;

  private:
    int fd_ = -1;
};

}  // namespace sft
