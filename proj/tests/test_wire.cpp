// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "splitplan/errors.hpp"
#include "splitplan/wire.hpp"

using namespace splitplan;

namespace {

std::vector<uint8_t> random_bytes(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<uint8_t> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint8_t>(rng());
  return out;
}

}  // namespace

TEST_CASE("frame round trip across shapes, dtypes and codecs") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const int ndim = 1 + static_cast<int>(rng() % 4);
    std::vector<int64_t> dims;
    for (int d = 0; d < ndim; ++d) dims.push_back(1 + static_cast<int64_t>(rng() % 17));
    TensorShape shape(dims);
    for (DataType dtype : {DataType::F32, DataType::F16, DataType::U8}) {
      for (Codec codec : {Codec::None, Codec::Deflate}) {
        const size_t bytes = static_cast<size_t>(tensor_bytes(shape, dtype));
        std::vector<uint8_t> tensor = random_bytes(bytes, rng());
        std::vector<uint8_t> frame = encode_frame(shape, dtype, tensor.data(), bytes, codec);
        DecodedFrame decoded = decode_frame(frame.data(), frame.size());
        CHECK(decoded.shape == shape);
        CHECK(decoded.dtype == dtype);
        CHECK(decoded.codec == codec);
        CHECK(decoded.payload == tensor);
        CHECK(decoded.frame_size == frame.size());
      }
    }
  }
}

TEST_CASE("uncompressed frame size follows the layout formula") {
  TensorShape shape({3, 874, 1044});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor(bytes, 0x5a);
  std::vector<uint8_t> frame = encode_frame(shape, DataType::F32, tensor.data(), bytes,
                                            Codec::None);
  // fixed header + 4 bytes per dim + payload + crc32
  CHECK(frame.size() == kFrameFixedHeader + 4 * 3 + bytes + 4);
  CHECK(frame[0] == 'S');
  CHECK(frame[1] == 'P');
  CHECK(frame[2] == 'L');
  CHECK(frame[3] == 'T');
  CHECK(frame[4] == kFrameVersion);
}

TEST_CASE("encode rejects inconsistent buffers") {
  TensorShape shape({4, 4});
  std::vector<uint8_t> tensor(64, 0);
  CHECK_THROWS_AS(encode_frame(shape, DataType::F32, tensor.data(), /*size=*/63, Codec::None),
                  FramingError);
  // Degenerate shapes never reach the encoder.
  CHECK_THROWS_AS(TensorShape({4, 0}), StructuralError);
}

TEST_CASE("decode distinguishes truncation, malformation and corruption") {
  TensorShape shape({2, 3, 5});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = random_bytes(bytes, 99);
  std::vector<uint8_t> frame = encode_frame(shape, DataType::F32, tensor.data(), bytes,
                                            Codec::None);

  // Every strict prefix is incomplete, never malformed.
  for (size_t keep : {size_t(0), size_t(3), size_t(15), kFrameFixedHeader,
                      frame.size() - 5, frame.size() - 1})
    CHECK_THROWS_AS(decode_frame(frame.data(), keep), IncompleteFrameError);

  // Malformed headers.
  auto mutated = frame;
  mutated[0] = 'X';
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), FramingError);
  mutated = frame;
  mutated[4] = 9;  // unknown version
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), FramingError);
  mutated = frame;
  mutated[5] = 0x7f;  // unknown dtype code
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), FramingError);
  mutated = frame;
  mutated[6] = 0x7f;  // unknown codec code
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), FramingError);
  mutated = frame;
  mutated[7] = 0;  // ndim 0
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), FramingError);

  // Payload bit flip fails the checksum.
  mutated = frame;
  mutated[kFrameFixedHeader + 12 + bytes / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), CorruptionError);

  // Stored-CRC bit flip fails too.
  mutated = frame;
  mutated[mutated.size() - 1] ^= 0x80;
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), CorruptionError);
}

TEST_CASE("deflate payload corruption is caught before inflation lies") {
  TensorShape shape({64, 64});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor(bytes, 0);  // compresses hard
  std::vector<uint8_t> frame = encode_frame(shape, DataType::F32, tensor.data(), bytes,
                                            Codec::Deflate);
  CHECK(frame.size() < bytes / 100);

  auto mutated = frame;
  mutated[kFrameFixedHeader + 8 + 2] ^= 0x10;
  CHECK_THROWS_AS(decode_frame(mutated.data(), mutated.size()), CorruptionError);
}

TEST_CASE("deflate helpers invert each other") {
  for (size_t n : {size_t(1), size_t(100), size_t(65536)}) {
    std::vector<uint8_t> data = random_bytes(n, n);
    std::vector<uint8_t> packed = deflate_bytes(data.data(), data.size());
    std::vector<uint8_t> unpacked = inflate_bytes(packed.data(), packed.size(), data.size());
    CHECK(unpacked == data);
  }
  // Wrong expected size is a corruption signal.
  std::vector<uint8_t> data = random_bytes(256, 1);
  std::vector<uint8_t> packed = deflate_bytes(data.data(), data.size());
  CHECK_THROWS_AS(inflate_bytes(packed.data(), packed.size(), 255), CorruptionError);
}

TEST_CASE("codec names round trip") {
  CHECK(codec_from_name("none") == Codec::None);
  CHECK(codec_from_name("deflate") == Codec::Deflate);
  CHECK(codec_name(Codec::None) == "none");
  CHECK(codec_name(Codec::Deflate) == "deflate");
  CHECK_THROWS_AS(codec_from_name("zip"), DataError);
}

TEST_CASE("payload sources are deterministic and ordered by compressibility") {
  const size_t bytes = 1 << 20;
  CHECK(make_payload("zeros", bytes) == std::vector<uint8_t>(bytes, 0));
  CHECK(make_payload("random-uniform", bytes, 7) == make_payload("random-uniform", bytes, 7));
  CHECK(make_payload("random-uniform", bytes, 7) != make_payload("random-uniform", bytes, 8));
  CHECK(make_payload("gradient", bytes) == make_payload("gradient", bytes));
  CHECK_THROWS_AS(make_payload("noise", bytes), DataError);

  double zeros = measure_codec_ratio("zeros", bytes, Codec::Deflate);
  double gradient = measure_codec_ratio("gradient", bytes, Codec::Deflate);
  double random = measure_codec_ratio("random-uniform", bytes, Codec::Deflate);
  CHECK(zeros < 0.01);
  CHECK(gradient > zeros);
  CHECK(gradient < 0.9);
  CHECK(random > 0.95);
  CHECK(measure_codec_ratio("zeros", bytes, Codec::None) == doctest::Approx(1.0));
}

TEST_CASE("pipe transport moves frames byte-exactly") {
  auto [a, b] = make_pipe_transport();
  TensorShape shape({16, 32, 32});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("gradient", bytes);

  TransferReport r = run_transfer(*a, *b, shape, DataType::F32, Codec::None, tensor, {});
  CHECK(r.byte_exact);
  CHECK(r.tensor_bytes == bytes);
  CHECK(r.wire_bytes == kFrameFixedHeader + 4 * 3 + bytes + 4);
  CHECK(r.codec_ratio == doctest::Approx(1.0));
  CHECK(r.elapsed_s > 0.0);
  CHECK(r.throughput_bps > 0.0);
}

TEST_CASE("pipe transport with deflate still round trips") {
  auto [a, b] = make_pipe_transport();
  TensorShape shape({8, 64, 64});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("gradient", bytes);

  TransferReport r = run_transfer(*a, *b, shape, DataType::F32, Codec::Deflate, tensor, {});
  CHECK(r.byte_exact);
  CHECK(r.tensor_bytes == bytes);
  CHECK(r.wire_bytes < bytes);  // gradient compresses
  CHECK(r.codec_ratio < 0.9);
}

TEST_CASE("tcp loopback transfer is byte-exact") {
  TcpListener listener(0);  // ephemeral port
  CHECK(listener.port() != 0);
  std::unique_ptr<Transport> client = tcp_connect("127.0.0.1", listener.port());
  std::unique_ptr<Transport> server = listener.accept();

  TensorShape shape({64, 100, 100});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("random-uniform", bytes, 11);

  TransferReport r = run_transfer(*client, *server, shape, DataType::F32, Codec::None, tensor,
                                  {});
  CHECK(r.byte_exact);
  CHECK(r.tensor_bytes == bytes);
}

TEST_CASE("token bucket pacing approximates the configured rate") {
  // 4 MiB at 64 MiB/s should take ~62.5 ms wall time.
  const double rate = 64.0 * 1024 * 1024;
  TokenBucketPacer pacer(rate);
  CHECK(pacer.enabled());
  const size_t chunk = 16 * 1024;
  const size_t total = 4 * 1024 * 1024;
  auto t0 = std::chrono::steady_clock::now();
  for (size_t sent = 0; sent < total; sent += chunk) pacer.pace(chunk);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double expect = static_cast<double>(total) / rate;
  CHECK(elapsed > 0.5 * expect);
  CHECK(elapsed < 2.0 * expect);

  TokenBucketPacer unlimited(0.0);
  CHECK(!unlimited.enabled());
}

TEST_CASE("paced transfer lands near the analytic duration") {
  // 2 MiB over a 200 Mbps emulated channel: 2*2^20*8/2e8 ~ 83.9 ms.
  auto [a, b] = make_pipe_transport();
  TensorShape shape({2, 1024, 256});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("random-uniform", bytes, 3);

  EmulatedChannel channel{200e6, 0.0};
  TransferReport r = run_transfer(*a, *b, shape, DataType::F32, Codec::None, tensor, channel);
  CHECK(r.byte_exact);
  const double expect = static_cast<double>(r.wire_bytes) * 8.0 / channel.bandwidth_bps;
  CHECK(std::abs(r.elapsed_s - expect) <= 0.10 * expect);
  CHECK(std::abs(r.throughput_bps - channel.bandwidth_bps) <=
        0.10 * channel.bandwidth_bps);
}

TEST_CASE("latency emulation adds one rtt half to the clock") {
  auto [a, b] = make_pipe_transport();
  TensorShape shape({4, 16, 16});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("gradient", bytes);

  EmulatedChannel quiet{0.0, 0.0};
  EmulatedChannel lagged{0.0, 0.050};
  TransferReport base = run_transfer(*a, *b, shape, DataType::F32, Codec::None, tensor, quiet);
  TransferReport slow = run_transfer(*a, *b, shape, DataType::F32, Codec::None, tensor, lagged);
  CHECK(base.byte_exact);
  CHECK(slow.byte_exact);
  // The receiver stalls 2L before acking and the sender credits itself L, so
  // the reported time grows by ~L over the unlagged run.
  CHECK(slow.elapsed_s - base.elapsed_s > 0.030);
  CHECK(slow.elapsed_s - base.elapsed_s < 0.100);
}

TEST_CASE("transports detect mid-frame shutdown as truncation") {
  auto [a, b] = make_pipe_transport();
  TensorShape shape({8, 8});
  const size_t bytes = static_cast<size_t>(tensor_bytes(shape, DataType::F32));
  std::vector<uint8_t> tensor = make_payload("gradient", bytes);
  std::vector<uint8_t> frame = encode_frame(shape, DataType::F32, tensor.data(), bytes,
                                            Codec::None);

  a->send(frame.data(), frame.size() / 2);
  a->shutdown_send();
  std::vector<uint8_t> buf(frame.size());
  CHECK_THROWS_AS(b->recv_exact(buf.data(), buf.size()), IncompleteFrameError);
}
