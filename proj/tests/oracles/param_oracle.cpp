// SPDX-License-Identifier: Apache-2.0

#include "oracles/param_oracle.hpp"

#include <stdexcept>
#include <vector>

namespace splitplan::oracle {

namespace {

int64_t bn(int64_t c) { return 2 * c; }

int64_t linear(int64_t out, int64_t in) { return out * in + out; }

// conv3x3(in->out, maybe strided) + bn + conv3x3(out->out) + bn,
// plus a 1x1 projection when the block changes shape.
int64_t basic_block(int64_t in, int64_t out, bool project) {
  int64_t p = conv_params(out, in, 3, 3, false) + bn(out) +
              conv_params(out, out, 3, 3, false) + bn(out);
  if (project) p += conv_params(out, in, 1, 1, false) + bn(out);
  return p;
}

// conv1x1(in->mid) + conv3x3(mid->mid) + conv1x1(mid->4*mid), each with bn.
int64_t bottleneck_block(int64_t in, int64_t mid, bool project) {
  int64_t out = 4 * mid;
  int64_t p = conv_params(mid, in, 1, 1, false) + bn(mid) +
              conv_params(mid, mid, 3, 3, false) + bn(mid) +
              conv_params(out, mid, 1, 1, false) + bn(out);
  if (project) p += conv_params(out, in, 1, 1, false) + bn(out);
  return p;
}

}  // namespace

int64_t conv_params(int64_t out, int64_t in, int64_t kh, int64_t kw, bool bias) {
  return out * in * kh * kw + (bias ? out : 0);
}

int64_t stem_params() { return conv_params(64, 3, 7, 7, false) + bn(64); }

int64_t backbone_params(int depth) {
  std::vector<int> blocks;
  bool wide = depth >= 50;
  switch (depth) {
    case 18: blocks = {2, 2, 2, 2}; break;
    case 34: blocks = {3, 4, 6, 3}; break;
    case 50: blocks = {3, 4, 6, 3}; break;
    case 101: blocks = {3, 4, 23, 3}; break;
    default: throw std::runtime_error("oracle: unsupported depth");
  }

  int64_t total = stem_params();
  int64_t in = 64;
  const int64_t mids[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    int64_t mid = mids[stage];
    int64_t out = wide ? 4 * mid : mid;
    for (int b = 0; b < blocks[stage]; ++b) {
      bool project = b == 0 && in != out;
      // The first block of stages 2-4 also strides, but striding alone does
      // not change the count; only the projection does.
      total += wide ? bottleneck_block(in, mid, project) : basic_block(in, out, project);
      in = out;
    }
  }
  return total;
}

int64_t fpn_params() {
  const int64_t stage_out[4] = {256, 512, 1024, 2048};
  int64_t p = 0;
  for (int64_t c : stage_out) p += conv_params(256, c, 1, 1, true);
  for (int i = 0; i < 4; ++i) p += conv_params(256, 256, 3, 3, true);
  return p;
}

int64_t rpn_params() {
  return conv_params(256, 256, 3, 3, true) + conv_params(3, 256, 1, 1, true) +
         conv_params(12, 256, 1, 1, true);
}

int64_t roi_box_params() {
  return linear(1024, 256 * 7 * 7) + linear(1024, 1024) + linear(91, 1024) + linear(364, 1024);
}

int64_t mask_head_params() {
  int64_t p = 0;
  for (int i = 0; i < 4; ++i) p += conv_params(256, 256, 3, 3, true);
  p += 256 * 256 * 2 * 2 + 256;  // 2x2 stride-2 deconv
  p += conv_params(91, 256, 1, 1, true);
  return p;
}

int64_t detector_params(int depth, bool mask) {
  // The FPN lateral widths above assume the wide (bottleneck-block) stages;
  // basic-block backbones expose (64,128,256,512) instead.
  int64_t fpn = 0;
  bool wide = depth >= 50;
  const int64_t narrow[4] = {64, 128, 256, 512};
  const int64_t wide_out[4] = {256, 512, 1024, 2048};
  for (int i = 0; i < 4; ++i)
    fpn += conv_params(256, wide ? wide_out[i] : narrow[i], 1, 1, true);
  for (int i = 0; i < 4; ++i) fpn += conv_params(256, 256, 3, 3, true);

  int64_t total = backbone_params(depth) + fpn + rpn_params() + roi_box_params();
  if (mask) total += mask_head_params();
  return total;
}

}  // namespace splitplan::oracle
