#include "sft/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace sft {

// ---------------------------------------------------------------------------
// loopback
// ---------------------------------------------------------------------------

LoopbackTransport::~LoopbackTransport() { close(); }

void LoopbackTransport::send_bytes(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    std::lock_guard<std::mutex> lock(out_->mu);
    if (out_->closed) throw TransportClosed("loopback: peer closed");
    out_->buf.insert(out_->buf.end(), p, p + len);
    bytes_sent_ += len;
    out_->cv.notify_all();
}

void LoopbackTransport::recv_bytes(void* data, size_t len) {
    auto* p = static_cast<uint8_t*>(data);
    size_t got = 0;
    std::unique_lock<std::mutex> lock(in_->mu);
    while (got < len) {
        in_->cv.wait(lock, [this] { return !in_->buf.empty() || in_->closed; });
        if (in_->buf.empty() && in_->closed)
            throw TransportClosed("loopback: stream closed with " + std::to_string(len - got) +
                                  " bytes outstanding");
        while (got < len && !in_->buf.empty()) {
            p[got++] = in_->buf.front();
            in_->buf.pop_front();
        }
    }
    bytes_received_ += len;
}

void LoopbackTransport::close() {
    for (auto& pipe : {in_, out_}) {
        std::lock_guard<std::mutex> lock(pipe->mu);
        pipe->closed = true;
        pipe->cv.notify_all();
    }
}

std::pair<std::unique_ptr<LoopbackTransport>, std::unique_ptr<LoopbackTransport>>
make_loopback_pair() {
    auto a2b = std::make_shared<detail::BytePipe>();
    auto b2a = std::make_shared<detail::BytePipe>();
    return {std::make_unique<LoopbackTransport>(b2a, a2b),
            std::make_unique<LoopbackTransport>(a2b, b2a)};
}

// ---------------------------------------------------------------------------
// tcp
// ---------------------------------------------------------------------------

namespace {

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, int port,
                                                    int timeout_ms) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_str = std::to_string(port);
    if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res)
        throw TransportClosed("tcp: cannot resolve " + host);

    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        throw TransportClosed("tcp: socket() failed");
    }
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 && errno == EINPROGRESS) {
        pollfd pfd{fd, POLLOUT, 0};
        rc = ::poll(&pfd, 1, timeout_ms);
        if (rc == 1) {
            int err = 0;
            socklen_t len = sizeof(err);
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
            rc = err == 0 ? 0 : -1;
        } else {
            rc = -1;
        }
    }
    if (rc != 0) {
        ::close(fd);
        throw TransportClosed("tcp: connect to " + host + ":" + port_str + " failed");
    }
    ::fcntl(fd, F_SETFL, flags);
    set_nodelay(fd);
    return std::make_unique<TcpTransport>(fd);
}

std::unique_ptr<TcpTransport> TcpTransport::listen_accept_one(const std::string& bind_addr,
                                                              int port) {
    const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (lfd < 0) throw TransportClosed("tcp: socket() failed");
    int one = 1;
    ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (bind_addr.empty() || bind_addr == "0.0.0.0")
        addr.sin_addr.s_addr = INADDR_ANY;
    else if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1) {
        ::close(lfd);
        throw TransportClosed("tcp: bad bind address " + bind_addr);
    }
    if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(lfd, 1) != 0) {
        ::close(lfd);
        throw TransportClosed("tcp: cannot listen on " + bind_addr + ":" + std::to_string(port));
    }
    const int fd = ::accept(lfd, nullptr, nullptr);
    ::close(lfd);
    if (fd < 0) throw TransportClosed("tcp: accept failed");
    set_nodelay(fd);
    return std::make_unique<TcpTransport>(fd);
}

TcpTransport::~TcpTransport() { close(); }

void TcpTransport::send_bytes(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(fd_, p + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            throw TransportClosed("tcp: send failed (" + std::string(std::strerror(errno)) + ")");
        }
        sent += static_cast<size_t>(n);
    }
    bytes_sent_ += len;
}

void TcpTransport::recv_bytes(void* data, size_t len) {
    auto* p = static_cast<uint8_t*>(data);
    size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd_, p + got, len - got, 0);
        if (n == 0) throw TransportClosed("tcp: peer closed");
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportClosed("tcp: recv failed (" + std::string(std::strerror(errno)) + ")");
        }
        got += static_cast<size_t>(n);
    }
    bytes_received_ += len;
}

void TcpTransport::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace sft
