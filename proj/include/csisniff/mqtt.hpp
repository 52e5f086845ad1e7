#pragma once

// Minimal MQTT 3.1.1: packet codec, a threaded client and a small broker.
//
// Supported: CONNECT/CONNACK, PUBLISH at QoS 0 and 1 (PUBACK), SUBSCRIBE/SUBACK
// with '+' and '#' wildcards, UNSUBSCRIBE/UNSUBACK, PINGREQ/PINGRESP,
// DISCONNECT. No QoS 2, retained messages, wills, persistent sessions, auth
// or TLS. The broker accepts but ignores will/username/password fields.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "csisniff/error.hpp"

namespace csisniff::mqtt {

class BrokerUnavailable : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

class ProtocolError : public RuntimeFailure
{
public:
  using RuntimeFailure::RuntimeFailure;
};

enum class PacketType : std::uint8_t {
  connect = 1,
  connack = 2,
  publish = 3,
  puback = 4,
  subscribe = 8,
  suback = 9,
  unsubscribe = 10,
  unsuback = 11,
  pingreq = 12,
  pingresp = 13,
  disconnect = 14,
};

inline constexpr std::size_t kMaxRemainingLength = 268'435'455;

struct Packet
{
  std::uint8_t header = 0;  // type << 4 | flags
  std::vector<std::uint8_t> body;

  PacketType type() const { return static_cast<PacketType>(header >> 4); }
  std::uint8_t flags() const { return header & 0x0f; }
};

// ---------------------------------------------------------------------------
// Codec

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void put_string(std::vector<std::uint8_t>& out, std::string_view s)
{
  if (s.size() > 0xffff)
    throw ProtocolError("string field too long");
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

inline std::vector<std::uint8_t> serialize(const Packet& p)
{
  if (p.body.size() > kMaxRemainingLength)
    throw ProtocolError("packet too large");
  std::vector<std::uint8_t> out;
  out.reserve(p.body.size() + 5);
  out.push_back(p.header);
  std::size_t len = p.body.size();
  do {
    std::uint8_t byte = len % 128;
    len /= 128;
    if (len > 0)
      byte |= 0x80;
    out.push_back(byte);
  } while (len > 0);
  out.insert(out.end(), p.body.begin(), p.body.end());
  return out;
}

class Reader
{
public:
  explicit Reader(const std::vector<std::uint8_t>& body)
      : body_(body)
  {
  }

  std::uint8_t u8()
  {
    need(1);
    return body_[pos_++];
  }

  std::uint16_t u16()
  {
    need(2);
    const auto v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::string string()
  {
    const auto n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(body_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::string rest()
  {
    std::string s(reinterpret_cast<const char*>(body_.data() + pos_), body_.size() - pos_);
    pos_ = body_.size();
    return s;
  }

  bool done() const { return pos_ >= body_.size(); }

private:
  void need(std::size_t n) const
  {
    if (pos_ + n > body_.size())
      throw ProtocolError("truncated packet");
  }

  const std::vector<std::uint8_t>& body_;
  std::size_t pos_ = 0;
};

struct ConnectInfo
{
  std::string client_id;
  std::uint16_t keepalive = 0;
  bool clean_session = true;
};

inline Packet make_connect(const ConnectInfo& info)
{
  Packet p;
  p.header = static_cast<std::uint8_t>(PacketType::connect) << 4;
  put_string(p.body, "MQTT");
  p.body.push_back(4);  // protocol level 3.1.1
  p.body.push_back(info.clean_session ? 0x02 : 0x00);
  put_u16(p.body, info.keepalive);
  put_string(p.body, info.client_id);
  return p;
}

inline ConnectInfo parse_connect(const Packet& p)
{
  Reader r(p.body);
  if (r.string() != "MQTT")
    throw ProtocolError("unsupported protocol name");
  if (r.u8() != 4)
    throw ProtocolError("unsupported protocol level");
  const auto flags = r.u8();
  ConnectInfo info;
  info.clean_session = (flags & 0x02) != 0;
  info.keepalive = r.u16();
  info.client_id = r.string();
  if (flags & 0x04) {  // will topic + message
    r.string();
    r.string();
  }
  if (flags & 0x80)
    r.string();
  if (flags & 0x40)
    r.string();
  return info;
}

inline Packet make_connack(std::uint8_t return_code)
{
  return {static_cast<std::uint8_t>(PacketType::connack) << 4, {0, return_code}};
}

struct Message
{
  std::string topic;
  std::string payload;
  int qos = 0;
  std::uint16_t packet_id = 0;
};

inline Packet make_publish(const Message& m)
{
  Packet p;
  p.header = static_cast<std::uint8_t>((static_cast<int>(PacketType::publish) << 4) | (m.qos << 1));
  put_string(p.body, m.topic);
  if (m.qos > 0)
    put_u16(p.body, m.packet_id);
  p.body.insert(p.body.end(), m.payload.begin(), m.payload.end());
  return p;
}

inline Message parse_publish(const Packet& p)
{
  Reader r(p.body);
  Message m;
  m.qos = (p.flags() >> 1) & 0x03;
  if (m.qos > 1)
    throw ProtocolError("QoS 2 is not supported");
  m.topic = r.string();
  if (m.qos > 0)
    m.packet_id = r.u16();
  m.payload = r.rest();
  return m;
}

inline Packet make_id_packet(PacketType type, std::uint16_t id, std::uint8_t flags = 0)
{
  Packet p;
  p.header = static_cast<std::uint8_t>((static_cast<int>(type) << 4) | flags);
  put_u16(p.body, id);
  return p;
}

inline Packet make_subscribe(std::uint16_t id, const std::vector<std::pair<std::string, int>>& filters)
{
  auto p = make_id_packet(PacketType::subscribe, id, 0x02);
  for (const auto& [f, qos] : filters) {
    put_string(p.body, f);
    p.body.push_back(static_cast<std::uint8_t>(qos));
  }
  return p;
}

inline Packet make_simple(PacketType type)
{
  return {static_cast<std::uint8_t>(static_cast<int>(type) << 4), {}};
}

/// MQTT filter matching with '+' (one level) and '#' (rest, including parent).
inline bool topic_matches(std::string_view filter, std::string_view topic)
{
  std::size_t fi = 0, ti = 0;
  for (;;) {
    const auto fe = std::min(filter.find('/', fi), filter.size());
    const auto level = filter.substr(fi, fe - fi);
    if (level == "#")
      return true;
    if (ti > topic.size())
      return false;
    const auto te = std::min(topic.find('/', ti), topic.size());
    if (level != "+" && level != topic.substr(ti, te - ti))
      return false;
    const bool filter_end = fe == filter.size();
    const bool topic_end = te == topic.size();
    if (filter_end || topic_end) {
      if (filter_end && topic_end)
        return true;
      // "a/#" also matches "a"
      return topic_end && filter.substr(fe) == "/#";
    }
    fi = fe + 1;
    ti = te + 1;
  }
}

// ---------------------------------------------------------------------------
// Sockets

class Socket
{
public:
  Socket() = default;
  explicit Socket(int fd)
      : fd_(fd)
  {
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept
      : fd_(std::exchange(o.fd_, -1))
  {
  }
  Socket& operator=(Socket&& o) noexcept
  {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void shutdown() noexcept
  {
    if (fd_ >= 0)
      ::shutdown(fd_, SHUT_RDWR);
  }

  void close() noexcept
  {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void send_all(const std::vector<std::uint8_t>& bytes) const
  {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR)
        continue;
      if (n <= 0)
        throw RuntimeFailure(std::string("send failed: ") + std::strerror(errno));
      sent += static_cast<std::size_t>(n);
    }
  }

  /// False on orderly close before the first byte; throws on a partial read.
  bool recv_exact(std::uint8_t* buf, std::size_t n) const
  {
    std::size_t got = 0;
    while (got < n) {
      auto r = ::recv(fd_, buf + got, n - got, 0);
      if (r < 0 && errno == EINTR)
        continue;
      if (r <= 0) {
        if (got == 0)
          return false;
        throw RuntimeFailure("connection closed mid-packet");
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  std::optional<Packet> read_packet() const
  {
    Packet p;
    if (!recv_exact(&p.header, 1))
      return std::nullopt;
    std::size_t len = 0, mult = 1;
    for (int i = 0;; ++i) {
      std::uint8_t b;
      if (!recv_exact(&b, 1) || i >= 4)
        throw ProtocolError("bad remaining length");
      len += (b & 0x7f) * mult;
      mult *= 128;
      if (!(b & 0x80))
        break;
    }
    p.body.resize(len);
    if (len > 0 && !recv_exact(p.body.data(), len))
      throw RuntimeFailure("connection closed mid-packet");
    return p;
  }

  static Socket connect_to(const std::string& host, std::uint16_t port)
  {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto service = std::to_string(port);
    if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0)
      throw BrokerUnavailable("cannot resolve " + host);
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    for (auto* ai = res; ai; ai = ai->ai_next) {
      Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s.valid())
        continue;
      if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
        int one = 1;
        ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return s;
      }
    }
    throw BrokerUnavailable("cannot connect to broker at " + host + ":" + service);
  }

  static Socket listen_on(const std::string& host, std::uint16_t port)
  {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid())
      throw RuntimeFailure("socket() failed");
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw RuntimeFailure("bad listen address " + host);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw RuntimeFailure("bind " + host + ":" + std::to_string(port) + " failed: " +
                           std::strerror(errno));
    if (::listen(s.fd(), 64) != 0)
      throw RuntimeFailure("listen failed");
    return s;
  }

  std::uint16_t local_port() const
  {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

private:
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Broker

class Broker
{
public:
  explicit Broker(std::string host = "127.0.0.1", std::uint16_t port = 0)
      : listener_(Socket::listen_on(host, port))
  {
    accept_thread_ = std::jthread([this] { accept_loop(); });
  }

  ~Broker() { stop(); }

  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  std::uint16_t port() const { return listener_.local_port(); }

  void stop()
  {
    if (stopping_.exchange(true))
      return;
    listener_.shutdown();
    if (accept_thread_.joinable())
      accept_thread_.join();
    std::vector<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lock(mutex_);
      sessions = sessions_;
    }
    for (auto& s : sessions)
      s->socket.shutdown();
    std::vector<std::jthread> threads;
    {
      std::lock_guard lock(mutex_);
      threads = std::move(threads_);
    }
    threads.clear();  // joins
    listener_.close();
  }

private:
  struct Session
  {
    Socket socket;
    std::mutex write_mutex;
    std::vector<std::pair<std::string, int>> subscriptions;  // guarded by Broker::mutex_
    std::uint16_t next_id = 0;

    void send(const Packet& p)
    {
      std::lock_guard lock(write_mutex);
      socket.send_all(serialize(p));
    }
  };

  void accept_loop()
  {
    while (!stopping_) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR)
          continue;
        return;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto session = std::make_shared<Session>();
      session->socket = Socket(fd);
      std::lock_guard lock(mutex_);
      if (stopping_) {
        session->socket.shutdown();
        return;
      }
      sessions_.push_back(session);
      threads_.emplace_back([this, session] { serve(session); });
    }
  }

  void serve(const std::shared_ptr<Session>& s)
  {
    try {
      auto first = s->socket.read_packet();
      if (!first || first->type() != PacketType::connect)
        throw ProtocolError("expected CONNECT");
      parse_connect(*first);
      s->send(make_connack(0));
      while (auto p = s->socket.read_packet()) {
        switch (p->type()) {
        case PacketType::publish: {
          auto m = parse_publish(*p);
          if (m.qos == 1)
            s->send(make_id_packet(PacketType::puback, m.packet_id));
          route(m);
          break;
        }
        case PacketType::subscribe: {
          Reader r(p->body);
          const auto id = r.u16();
          Packet ack = make_id_packet(PacketType::suback, id);
          std::vector<std::pair<std::string, int>> added;
          while (!r.done()) {
            auto filter = r.string();
            const int qos = std::min<int>(r.u8() & 0x03, 1);
            added.emplace_back(std::move(filter), qos);
            ack.body.push_back(static_cast<std::uint8_t>(qos));
          }
          {
            std::lock_guard lock(mutex_);
            for (auto& a : added) {
              auto& subs = s->subscriptions;
              auto it = std::find_if(subs.begin(), subs.end(),
                                     [&](const auto& e) { return e.first == a.first; });
              if (it != subs.end())
                it->second = a.second;
              else
                subs.push_back(a);
            }
          }
          s->send(ack);
          break;
        }
        case PacketType::unsubscribe: {
          Reader r(p->body);
          const auto id = r.u16();
          {
            std::lock_guard lock(mutex_);
            while (!r.done()) {
              auto filter = r.string();
              std::erase_if(s->subscriptions, [&](const auto& e) { return e.first == filter; });
            }
          }
          s->send(make_id_packet(PacketType::unsuback, id));
          break;
        }
        case PacketType::pingreq: s->send(make_simple(PacketType::pingresp)); break;
        case PacketType::puback: break;
        case PacketType::disconnect: throw std::runtime_error("disconnect");
        default: throw ProtocolError("unexpected packet type");
        }
      }
    } catch (...) {
    }
    s->socket.shutdown();
    std::lock_guard lock(mutex_);
    std::erase(sessions_, s);
  }

  void route(const Message& m)
  {
    std::vector<std::pair<std::shared_ptr<Session>, int>> targets;
    {
      std::lock_guard lock(mutex_);
      for (auto& s : sessions_) {
        int best = -1;
        for (const auto& [filter, qos] : s->subscriptions)
          if (topic_matches(filter, m.topic))
            best = std::max(best, qos);
        if (best >= 0)
          targets.emplace_back(s, std::min(best, m.qos));
      }
    }
    for (auto& [s, qos] : targets) {
      Message out{m.topic, m.payload, qos, 0};
      try {
        std::lock_guard lock(s->write_mutex);
        if (qos > 0) {
          if (++s->next_id == 0)
            s->next_id = 1;
          out.packet_id = s->next_id;
        }
        s->socket.send_all(serialize(make_publish(out)));
      } catch (...) {
        s->socket.shutdown();
      }
    }
  }

  Socket listener_;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::vector<std::jthread> threads_;
  std::jthread accept_thread_;
};

// ---------------------------------------------------------------------------
// Client

/// Connects once; incoming messages are delivered on a dedicated dispatch
/// thread, one at a time, so handlers may publish (and wait for PUBACK).
class Client
{
public:
  using Handler = std::function<void(const Message&)>;

  Client(std::string host, std::uint16_t port, std::string client_id)
      : host_(std::move(host))
      , port_(port)
      , client_id_(std::move(client_id))
  {
  }

  ~Client() { disconnect(); }

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void on_message(Handler h)
  {
    std::lock_guard lock(state_mutex_);
    handler_ = std::move(h);
  }

  void connect(std::chrono::milliseconds timeout = std::chrono::seconds(5))
  {
    std::lock_guard lock(connect_mutex_);
    if (connected_)
      return;
    stop_threads();
    socket_ = Socket::connect_to(host_, port_);
    timeval tv{};
    tv.tv_sec = static_cast<long>(timeout.count() / 1000);
    tv.tv_usec = static_cast<long>((timeout.count() % 1000) * 1000);
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    socket_.send_all(serialize(make_connect({client_id_, 0, true})));
    std::optional<Packet> ack;
    try {
      ack = socket_.read_packet();
    } catch (const Error&) {
    }
    if (!ack || ack->type() != PacketType::connack || ack->body.size() != 2 || ack->body[1] != 0) {
      socket_.close();
      throw BrokerUnavailable("broker refused or did not answer CONNECT");
    }
    timeval none{};
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_RCVTIMEO, &none, sizeof none);
    connected_ = true;
    closing_ = false;
    reader_ = std::jthread([this] { read_loop(); });
    dispatcher_ = std::jthread([this](std::stop_token st) { dispatch_loop(st); });
    if (!subscriptions_.empty())
      send_subscribe(subscriptions_, timeout);
  }

  bool connected() const { return connected_; }

  void subscribe(const std::vector<std::string>& filters, int qos = 1,
                 std::chrono::milliseconds timeout = std::chrono::seconds(5))
  {
    std::vector<std::pair<std::string, int>> list;
    for (const auto& f : filters)
      list.emplace_back(f, qos);
    {
      std::lock_guard lock(state_mutex_);
      for (const auto& entry : list) {
        auto it = std::find_if(subscriptions_.begin(), subscriptions_.end(),
                               [&](const auto& e) { return e.first == entry.first; });
        if (it != subscriptions_.end())
          it->second = entry.second;
        else
          subscriptions_.push_back(entry);
      }
    }
    send_subscribe(list, timeout);
  }

  /// QoS 1 blocks until the broker acknowledges or `timeout` expires.
  void publish(const std::string& topic, const std::string& payload, int qos = 1,
               std::chrono::milliseconds timeout = std::chrono::seconds(5))
  {
    if (!connected_)
      throw BrokerUnavailable("not connected to broker");
    Message m{topic, payload, qos, 0};
    if (qos == 0) {
      send(make_publish(m));
      return;
    }
    const auto id = allocate_id();
    m.packet_id = id;
    send(make_publish(m));
    wait_ack(id, timeout, "PUBACK");
  }

  void disconnect()
  {
    std::lock_guard lock(connect_mutex_);
    if (connected_) {
      try {
        send(make_simple(PacketType::disconnect));
      } catch (...) {
      }
    }
    stop_threads();
  }

private:
  void stop_threads()
  {
    closing_ = true;
    socket_.shutdown();
    if (reader_.joinable())
      reader_.join();
    dispatcher_.request_stop();
    queue_cv_.notify_all();
    if (dispatcher_.joinable() && dispatcher_.get_id() != std::this_thread::get_id())
      dispatcher_.join();
    else if (dispatcher_.joinable())
      dispatcher_.detach();
    socket_.close();
    connected_ = false;
  }

  void send(const Packet& p)
  {
    std::lock_guard lock(write_mutex_);
    try {
      socket_.send_all(serialize(p));
    } catch (const RuntimeFailure& e) {
      connected_ = false;
      throw BrokerUnavailable(e.what());
    }
  }

  std::uint16_t allocate_id()
  {
    std::lock_guard lock(state_mutex_);
    if (++next_id_ == 0)
      next_id_ = 1;
    acked_.erase(next_id_);
    return next_id_;
  }

  void wait_ack(std::uint16_t id, std::chrono::milliseconds timeout, const char* what)
  {
    std::unique_lock lock(state_mutex_);
    if (!ack_cv_.wait_for(lock, timeout, [&] { return acked_.count(id) > 0 || !connected_; }))
      throw BrokerUnavailable(std::string("timed out waiting for ") + what);
    if (!acked_.count(id))
      throw BrokerUnavailable("connection lost before " + std::string(what));
    acked_.erase(id);
  }

  void send_subscribe(const std::vector<std::pair<std::string, int>>& list,
                      std::chrono::milliseconds timeout)
  {
    if (!connected_ || list.empty())
      return;
    const auto id = allocate_id();
    send(make_subscribe(id, list));
    wait_ack(id, timeout, "SUBACK");
  }

  void read_loop()
  {
    try {
      while (auto p = socket_.read_packet()) {
        switch (p->type()) {
        case PacketType::publish: {
          auto m = parse_publish(*p);
          if (m.qos == 1)
            send(make_id_packet(PacketType::puback, m.packet_id));
          {
            std::lock_guard lock(queue_mutex_);
            queue_.push_back(std::move(m));
          }
          queue_cv_.notify_one();
          break;
        }
        case PacketType::puback:
        case PacketType::suback:
        case PacketType::unsuback: {
          Reader r(p->body);
          const auto id = r.u16();
          {
            std::lock_guard lock(state_mutex_);
            acked_.insert(id);
          }
          ack_cv_.notify_all();
          break;
        }
        default: break;
        }
      }
    } catch (...) {
    }
    {
      std::lock_guard lock(state_mutex_);
      connected_ = false;
    }
    ack_cv_.notify_all();
  }

  void dispatch_loop(std::stop_token st)
  {
    for (;;) {
      Message m;
      {
        std::unique_lock lock(queue_mutex_);
        queue_cv_.wait(lock, [&] { return st.stop_requested() || !queue_.empty(); });
        if (queue_.empty())
          return;
        m = std::move(queue_.front());
        queue_.pop_front();
      }
      Handler h;
      {
        std::lock_guard lock(state_mutex_);
        h = handler_;
      }
      if (h) {
        try {
          h(m);
        } catch (...) {
        }
      }
    }
  }

  std::string host_;
  std::uint16_t port_;
  std::string client_id_;
  Socket socket_;
  std::atomic<bool> connected_{false};
  std::atomic<bool> closing_{false};
  std::mutex connect_mutex_;
  std::mutex write_mutex_;
  std::mutex state_mutex_;
  std::condition_variable ack_cv_;
  std::set<std::uint16_t> acked_;
  std::uint16_t next_id_ = 0;
  Handler handler_;
  std::vector<std::pair<std::string, int>> subscriptions_;
  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Message> queue_;
  std::jthread reader_;
  std::jthread dispatcher_;
};

}  // namespace csisniff::mqtt
