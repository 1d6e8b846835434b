// SPDX-License-Identifier: Apache-2.0

#include "splitplan/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <zlib.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "splitplan/errors.hpp"

namespace splitplan {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'T'};
constexpr size_t kSendChunk = 16 * 1024;
constexpr uint8_t kAck = 0x06;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

uint64_t now_ns() {
  return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                   std::chrono::steady_clock::now().time_since_epoch())
                                   .count());
}

void check_zlib_size(size_t size) {
  if (size > std::numeric_limits<uInt>::max()) throw FramingError("payload too large");
}

}  // namespace

Codec codec_from_name(const std::string& name) {
  if (name == "none") return Codec::None;
  if (name == "deflate") return Codec::Deflate;
  throw DataError("unknown codec '" + name + "' (use none or deflate)");
}

std::string codec_name(Codec codec) {
  return codec == Codec::Deflate ? "deflate" : "none";
}

std::vector<uint8_t> deflate_bytes(const uint8_t* data, size_t size, int level) {
  check_zlib_size(size);
  z_stream s{};
  if (deflateInit2(&s, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("deflate: init failed");
  std::vector<uint8_t> out(deflateBound(&s, static_cast<uLong>(size)));
  s.next_in = const_cast<Bytef*>(data);
  s.avail_in = static_cast<uInt>(size);
  s.next_out = out.data();
  s.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&s, Z_FINISH);
  size_t produced = s.total_out;
  deflateEnd(&s);
  if (rc != Z_STREAM_END) throw IoError("deflate: compression failed");
  out.resize(produced);
  return out;
}

std::vector<uint8_t> inflate_bytes(const uint8_t* data, size_t size, size_t expected_size) {
  check_zlib_size(size);
  check_zlib_size(expected_size);
  std::vector<uint8_t> out(expected_size);
  if (expected_size == 0 && size == 0) return out;
  z_stream s{};
  if (inflateInit2(&s, -15) != Z_OK) throw IoError("inflate: init failed");
  s.next_in = const_cast<Bytef*>(data);
  s.avail_in = static_cast<uInt>(size);
  s.next_out = out.data();
  s.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&s, Z_FINISH);
  size_t produced = s.total_out;
  uInt left = s.avail_in;
  inflateEnd(&s);
  if (rc != Z_STREAM_END || produced != expected_size || left != 0)
    throw CorruptionError("inflate: corrupt or truncated stream");
  return out;
}

uint32_t payload_crc32(const uint8_t* data, size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    uInt chunk = static_cast<uInt>(std::min<size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<uint32_t>(crc);
}

std::vector<uint8_t> encode_frame(const TensorShape& shape, DataType dtype,
                                  const uint8_t* data, size_t size, Codec codec) {
  shape.validate();
  if (shape.dims.size() > 255) throw FramingError("frame: too many dimensions");
  for (int64_t d : shape.dims)
    if (d > static_cast<int64_t>(std::numeric_limits<uint32_t>::max()))
      throw FramingError("frame: dimension exceeds 32 bits");
  int64_t raw = tensor_bytes(shape, dtype);
  if (static_cast<uint64_t>(raw) != size)
    throw FramingError("frame: buffer size does not match shape/dtype");

  std::vector<uint8_t> stored;
  const uint8_t* payload = data;
  size_t payload_len = size;
  if (codec == Codec::Deflate) {
    stored = deflate_bytes(data, size);
    payload = stored.data();
    payload_len = stored.size();
  }

  std::vector<uint8_t> frame;
  frame.reserve(kFrameFixedHeader + 4 * shape.dims.size() + payload_len + 4);
  frame.insert(frame.end(), kMagic, kMagic + 4);
  frame.push_back(kFrameVersion);
  frame.push_back(static_cast<uint8_t>(dtype));
  frame.push_back(static_cast<uint8_t>(codec));
  frame.push_back(static_cast<uint8_t>(shape.dims.size()));
  put_u64(frame, payload_len);
  for (int64_t d : shape.dims) put_u32(frame, static_cast<uint32_t>(d));
  frame.insert(frame.end(), payload, payload + payload_len);
  put_u32(frame, payload_crc32(payload, payload_len));
  return frame;
}

DecodedFrame decode_frame(const uint8_t* data, size_t size) {
  if (size < kFrameFixedHeader) throw IncompleteFrameError("frame: truncated header");
  if (std::memcmp(data, kMagic, 4) != 0) throw FramingError("frame: bad magic");
  if (data[4] != kFrameVersion)
    throw FramingError("frame: unsupported version " + std::to_string(data[4]));
  uint8_t dtype_code = data[5];
  if (dtype_code > static_cast<uint8_t>(DataType::U8))
    throw FramingError("frame: unknown dtype code " + std::to_string(dtype_code));
  uint8_t codec_code = data[6];
  if (codec_code > static_cast<uint8_t>(Codec::Deflate))
    throw FramingError("frame: unknown codec code " + std::to_string(codec_code));
  uint8_t ndim = data[7];
  if (ndim == 0) throw FramingError("frame: zero-dimensional shape");
  uint64_t payload_len = get_u64(data + 8);

  size_t need = kFrameFixedHeader + 4 * static_cast<size_t>(ndim);
  if (size < need) throw IncompleteFrameError("frame: truncated dimension list");
  std::vector<int64_t> dims;
  for (size_t i = 0; i < ndim; ++i) {
    uint32_t d = get_u32(data + kFrameFixedHeader + 4 * i);
    if (d == 0) throw FramingError("frame: zero dimension");
    dims.push_back(static_cast<int64_t>(d));
  }

  need += payload_len + 4;
  if (size < need) throw IncompleteFrameError("frame: truncated payload");
  const uint8_t* payload = data + kFrameFixedHeader + 4 * ndim;
  uint32_t crc = get_u32(payload + payload_len);
  if (crc != payload_crc32(payload, payload_len))
    throw CorruptionError("frame: checksum mismatch");

  DecodedFrame out;
  out.shape = TensorShape(std::move(dims));
  out.dtype = static_cast<DataType>(dtype_code);
  out.codec = static_cast<Codec>(codec_code);
  out.frame_size = need;
  uint64_t raw = static_cast<uint64_t>(tensor_bytes(out.shape, out.dtype));
  if (out.codec == Codec::Deflate) {
    out.payload = inflate_bytes(payload, payload_len, raw);
  } else {
    if (payload_len != raw) throw CorruptionError("frame: payload size mismatch");
    out.payload.assign(payload, payload + payload_len);
  }
  return out;
}

std::vector<uint8_t> make_payload(const std::string& source, size_t bytes, uint64_t seed) {
  std::vector<uint8_t> out(bytes, 0);
  if (source == "zeros") return out;
  if (source == "random-uniform") {
    std::mt19937_64 gen(seed);
    size_t i = 0;
    for (; i + 8 <= bytes; i += 8) {
      uint64_t v = gen();
      std::memcpy(out.data() + i, &v, 8);
    }
    if (i < bytes) {
      uint64_t v = gen();
      std::memcpy(out.data() + i, &v, bytes - i);
    }
    return out;
  }
  if (source == "gradient") {
    // Smooth non-repeating ramp: structured but not run-dominated.
    size_t n = bytes / 4;
    for (size_t i = 0; i < n; ++i) {
      float v = static_cast<float>(i) * 1e-3f;
      std::memcpy(out.data() + 4 * i, &v, 4);
    }
    return out;
  }
  throw DataError("unknown payload source '" + source + "'");
}

std::vector<std::string> payload_source_names() { return {"zeros", "random-uniform", "gradient"}; }

double measure_codec_ratio(const std::string& source, size_t bytes, Codec codec, uint64_t seed) {
  if (bytes == 0) throw DataError("codec ratio: empty payload");
  std::vector<uint8_t> data = make_payload(source, bytes, seed);
  if (codec == Codec::None) return 1.0;
  return static_cast<double>(deflate_bytes(data.data(), data.size()).size()) /
         static_cast<double>(bytes);
}

void Transport::recv_exact(uint8_t* data, size_t size) {
  size_t got = 0;
  while (got < size) {
    size_t n = recv(data + got, size - got);
    if (n == 0) throw IncompleteFrameError("stream ended mid-frame");
    got += n;
  }
}

namespace {

// One direction of the in-process pipe.
struct PipeBuf {
  std::mutex m;
  std::condition_variable cv;
  std::vector<uint8_t> data;
  size_t head = 0;
  bool closed = false;

  void push(const uint8_t* p, size_t n) {
    std::lock_guard<std::mutex> lock(m);
    if (closed) throw IoError("pipe: send after shutdown");
    data.insert(data.end(), p, p + n);
    cv.notify_all();
  }

  size_t pop(uint8_t* p, size_t n) {
    std::unique_lock<std::mutex> lock(m);
    cv.wait(lock, [&] { return head < data.size() || closed; });
    if (head >= data.size()) return 0;  // closed and drained
    size_t take = std::min(n, data.size() - head);
    std::memcpy(p, data.data() + head, take);
    head += take;
    if (head == data.size()) {
      data.clear();
      head = 0;
    }
    return take;
  }

  void close() {
    std::lock_guard<std::mutex> lock(m);
    closed = true;
    cv.notify_all();
  }
};

class PipeTransport : public Transport {
 public:
  PipeTransport(std::shared_ptr<PipeBuf> out, std::shared_ptr<PipeBuf> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~PipeTransport() override { out_->close(); }

  void send(const uint8_t* data, size_t size) override { out_->push(data, size); }
  size_t recv(uint8_t* data, size_t size) override { return in_->pop(data, size); }
  void shutdown_send() override { out_->close(); }

 private:
  std::shared_ptr<PipeBuf> out_;
  std::shared_ptr<PipeBuf> in_;
};

class TcpTransport : public Transport {
 public:
  explicit TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const uint8_t* data, size_t size) override {
    while (size > 0) {
      ssize_t n = ::send(fd_, data, size, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("tcp send: ") + std::strerror(errno));
      }
      data += n;
      size -= static_cast<size_t>(n);
    }
  }

  size_t recv(uint8_t* data, size_t size) override {
    for (;;) {
      ssize_t n = ::recv(fd_, data, size, 0);
      if (n >= 0) return static_cast<size_t>(n);
      if (errno == EINTR) continue;
      throw IoError(std::string("tcp recv: ") + std::strerror(errno));
    }
  }

  void shutdown_send() override { ::shutdown(fd_, SHUT_WR); }

 private:
  int fd_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_transport() {
  auto a = std::make_shared<PipeBuf>();
  auto b = std::make_shared<PipeBuf>();
  return {std::make_unique<PipeTransport>(a, b), std::make_unique<PipeTransport>(b, a)};
}

TcpListener::TcpListener(uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw IoError(std::string("tcp listen: ") + std::strerror(errno));
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw IoError(std::string("tcp bind: ") + std::strerror(err));
  }
  if (::listen(fd_, 1) < 0) {
    int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw IoError(std::string("tcp listen: ") + std::strerror(err));
  }
  socklen_t len = sizeof(addr);
  if (getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) == 0)
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<TcpTransport>(fd);
    if (errno == EINTR) continue;
    throw IoError(std::string("tcp accept: ") + std::strerror(errno));
  }
}

std::unique_ptr<Transport> tcp_connect(const std::string& host, uint16_t port,
                                       double timeout_s) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  std::string ip = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1)
    throw IoError("tcp connect: bad address '" + host + "'");

  uint64_t deadline = now_ns() + static_cast<uint64_t>(timeout_s * 1e9);
  for (;;) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw IoError(std::string("tcp connect: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
      return std::make_unique<TcpTransport>(fd);
    int err = errno;
    ::close(fd);
    if (err != ECONNREFUSED || now_ns() >= deadline)
      throw IoError(std::string("tcp connect: ") + std::strerror(err));
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

TokenBucketPacer::TokenBucketPacer(double bytes_per_second, size_t bucket_bytes)
    : rate_(bytes_per_second), capacity_(static_cast<double>(bucket_bytes)) {
  last_ns_ = now_ns();
}

void TokenBucketPacer::pace(size_t bytes) {
  if (rate_ <= 0) return;
  double remaining = static_cast<double>(bytes);
  while (remaining > 0) {
    double take = std::min(remaining, capacity_);
    for (;;) {
      uint64_t now = now_ns();
      credit_ = std::min(capacity_, credit_ + static_cast<double>(now - last_ns_) * 1e-9 * rate_);
      last_ns_ = now;
      if (credit_ >= take) {
        credit_ -= take;
        break;
      }
      std::this_thread::sleep_for(std::chrono::duration<double>((take - credit_) / rate_));
    }
    remaining -= take;
  }
}

TransferReport run_transfer(Transport& sender, Transport& receiver, const TensorShape& shape,
                            DataType dtype, Codec codec, const std::vector<uint8_t>& tensor,
                            const EmulatedChannel& channel) {
  std::vector<uint8_t> frame = encode_frame(shape, dtype, tensor.data(), tensor.size(), codec);

  struct ReceiverResult {
    bool byte_exact = false;
    std::exception_ptr error;
  } rx;

  std::thread rx_thread([&] {
    try {
      std::vector<uint8_t> buf(kFrameFixedHeader);
      receiver.recv_exact(buf.data(), buf.size());
      uint8_t ndim = buf[7];
      uint64_t payload_len = get_u64(buf.data() + 8);
      size_t rest = 4 * static_cast<size_t>(ndim) + payload_len + 4;
      buf.resize(kFrameFixedHeader + rest);
      receiver.recv_exact(buf.data() + kFrameFixedHeader, rest);
      DecodedFrame decoded = decode_frame(buf.data(), buf.size());
      rx.byte_exact = decoded.payload == tensor;
      if (channel.latency_s > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(2 * channel.latency_s));
      uint8_t ack = kAck;
      receiver.send(&ack, 1);
    } catch (...) {
      rx.error = std::current_exception();
    }
  });

  TokenBucketPacer pacer(channel.bandwidth_bps > 0 ? channel.bandwidth_bps / 8.0 : 0.0);
  uint64_t t0 = now_ns();
  for (size_t off = 0; off < frame.size(); off += kSendChunk) {
    size_t n = std::min(kSendChunk, frame.size() - off);
    pacer.pace(n);
    sender.send(frame.data() + off, n);
  }
  uint8_t ack = 0;
  try {
    sender.recv_exact(&ack, 1);
  } catch (...) {
    rx_thread.join();
    if (rx.error) std::rethrow_exception(rx.error);
    throw;
  }
  uint64_t t1 = now_ns();
  rx_thread.join();
  if (rx.error) std::rethrow_exception(rx.error);
  if (ack != kAck) throw ProtocolError("transfer: bad ack byte");

  TransferReport report;
  report.tensor_bytes = tensor.size();
  report.wire_bytes = frame.size();
  double elapsed = static_cast<double>(t1 - t0) * 1e-9 - channel.latency_s;
  report.elapsed_s = std::max(elapsed, 1e-9);
  report.throughput_bps = static_cast<double>(report.wire_bytes) * 8.0 / report.elapsed_s;
  size_t stored = frame.size() - kFrameFixedHeader - 4 * shape.dims.size() - 4;
  report.codec_ratio =
      tensor.empty() ? 1.0 : static_cast<double>(stored) / static_cast<double>(tensor.size());
  report.byte_exact = rx.byte_exact;
  return report;
}

}  // namespace splitplan
