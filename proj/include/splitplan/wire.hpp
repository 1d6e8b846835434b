// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "splitplan/tensor.hpp"

namespace splitplan {

// Tensor frame layout, all integers little-endian:
//   magic "SPLT" | version u8 | dtype u8 | codec u8 | ndim u8 | payload_len u64
//   | ndim x dim u32 | payload | crc32 u32
// crc32 (IEEE 802.3 polynomial) covers the stored payload bytes.
enum class Codec : uint8_t { None = 0, Deflate = 1 };

constexpr uint8_t kFrameVersion = 1;
constexpr size_t kFrameFixedHeader = 16;

Codec codec_from_name(const std::string& name);   // "none" | "deflate"
std::string codec_name(Codec codec);

struct DecodedFrame {
  TensorShape shape;
  DataType dtype = DataType::F32;
  Codec codec = Codec::None;
  std::vector<uint8_t> payload;  // decompressed tensor bytes
  size_t frame_size = 0;         // bytes the frame occupied on the wire
};

std::vector<uint8_t> encode_frame(const TensorShape& shape, DataType dtype,
                                  const uint8_t* data, size_t size, Codec codec);

// Parses one frame from a buffer prefix. Throws IncompleteFrameError if the
// buffer holds only part of a frame, FramingError on malformed headers and
// CorruptionError on checksum or size mismatches.
DecodedFrame decode_frame(const uint8_t* data, size_t size);

// Raw DEFLATE (no zlib/gzip wrapper) helpers.
std::vector<uint8_t> deflate_bytes(const uint8_t* data, size_t size, int level = 6);
std::vector<uint8_t> inflate_bytes(const uint8_t* data, size_t size, size_t expected_size);
uint32_t payload_crc32(const uint8_t* data, size_t size);

// Deterministic synthetic tensor fills: "zeros", "random-uniform" (seeded
// uniform bytes) or "gradient" (smooth f32 ramp).
std::vector<uint8_t> make_payload(const std::string& source, size_t bytes, uint64_t seed = 7);
std::vector<std::string> payload_source_names();

// compressed/raw size for one synthetic source.
double measure_codec_ratio(const std::string& source, size_t bytes, Codec codec,
                           uint64_t seed = 7);

// Blocking duplex byte stream.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const uint8_t* data, size_t size) = 0;
  // Returns bytes read (<= size), 0 on orderly shutdown.
  virtual size_t recv(uint8_t* data, size_t size) = 0;
  virtual void shutdown_send() = 0;

  void send_all(const uint8_t* data, size_t size) { send(data, size); }
  void recv_exact(uint8_t* data, size_t size);
};

// In-process pipe pair; [0] and [1] are the two ends.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_transport();

constexpr uint16_t kDefaultTcpPort = 45511;

class TcpListener {
 public:
  explicit TcpListener(uint16_t port);  // 0 picks an ephemeral port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  uint16_t port() const { return port_; }
  std::unique_ptr<Transport> accept();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

std::unique_ptr<Transport> tcp_connect(const std::string& host, uint16_t port,
                                       double timeout_s = 5.0);

// Token-bucket byte pacer: 64 KiB burst capacity, starts empty, refills at
// the configured rate against absolute time so oversleep self-corrects.
class TokenBucketPacer {
 public:
  explicit TokenBucketPacer(double bytes_per_second, size_t bucket_bytes = 64 * 1024);
  void pace(size_t bytes);  // blocks until the bucket covers `bytes`
  bool enabled() const { return rate_ > 0; }

 private:
  double rate_;
  double capacity_;
  double credit_ = 0;
  uint64_t last_ns_ = 0;
};

struct EmulatedChannel {
  double bandwidth_bps = 0;  // 0 = unpaced
  double latency_s = 0;      // one-way, applied once per transfer
};

struct TransferReport {
  uint64_t tensor_bytes = 0;  // decoded tensor payload size
  uint64_t wire_bytes = 0;    // full frame size on the wire
  double elapsed_s = 0;       // wall time minus one latency half
  double throughput_bps = 0;  // wire_bytes * 8 / elapsed_s
  double codec_ratio = 0;     // stored payload / raw payload
  bool byte_exact = false;
};

// Sends one framed tensor through `sender`, receives and decodes it from
// `receiver` on a second thread, and byte-compares the round trip. The
// receiver delays its ack by twice the one-way latency; the sender subtracts
// one half, so elapsed ~= wire_bytes*8/bandwidth + latency.
TransferReport run_transfer(Transport& sender, Transport& receiver, const TensorShape& shape,
                            DataType dtype, Codec codec, const std::vector<uint8_t>& tensor,
                            const EmulatedChannel& channel);

}  // namespace splitplan
