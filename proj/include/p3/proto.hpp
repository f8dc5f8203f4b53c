// Copyright 2026 The p3sync Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// Worker <-> server wire format. Every frame is a fixed 39-byte
// little-endian header followed by `payload_len` bytes:
//
//   offset  size  field
//        0     4  magic "P3W1"
//        4     1  msg_type (0 PUSH, 1 BCAST, 2 PULL, 3 NOTIFY, 4 HELLO, 5 FIN)
//        5     4  priority
//        9     8  iteration
//       17     2  worker_rank
//       19     4  layer_index
//       23     4  slice_index
//       27     8  offset (elements)
//       35     4  payload_len (bytes)
//       39     -  payload: packed float32 values (PUSH/BCAST only)

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "p3/errors.hpp"
#include "p3/plan.hpp"

namespace p3 {

enum class MsgType : uint8_t {
  push = 0,
  bcast = 1,
  pull = 2,
  notify = 3,
  hello = 4,
  fin = 5,
};

std::string_view to_string(MsgType type);

inline constexpr std::size_t kHeaderSize = 39;
inline constexpr uint32_t kDefaultMaxPayload = 16u << 20;
inline constexpr char kMagic[4] = {'P', '3', 'W', '1'};

struct Frame {
  MsgType type = MsgType::hello;
  uint32_t priority = 0;
  uint64_t iteration = 0;
  uint16_t worker_rank = 0;
  uint32_t layer_index = 0;
  uint32_t slice_index = 0;
  uint64_t offset = 0;
  std::vector<float> values;  // gradients for PUSH, parameters for BCAST

  SliceKey key() const { return {layer_index, slice_index}; }
  uint32_t payload_len() const { return static_cast<uint32_t>(values.size() * 4); }
  std::size_t wire_size() const { return kHeaderSize + values.size() * 4; }

  bool operator==(const Frame&) const;
};

bool carries_payload(MsgType type);

/// Appends the encoded frame to `out`. Throws ProtocolError when a control
/// frame carries values or the payload does not fit the 32-bit length field.
void encode_into(const Frame& frame, std::vector<std::byte>& out);
std::vector<std::byte> encode(const Frame& frame);

struct Decoded {
  Frame frame;
  std::size_t consumed = 0;
};

/// Input ends before a full frame; `bytes` more are needed at least.
struct NeedMore {
  std::size_t bytes = 0;
};

struct DecodeError {
  std::string message;
};

using DecodeResult = std::variant<Decoded, NeedMore, DecodeError>;

/// Decodes one frame from the front of `bytes`.
DecodeResult decode(std::span<const std::byte> bytes,
                    uint32_t max_payload = kDefaultMaxPayload);

/// Incremental decoder for a byte stream cut at arbitrary boundaries.
class FrameReader {
 public:
  explicit FrameReader(uint32_t max_payload = kDefaultMaxPayload)
      : max_payload_(max_payload) {}

  void feed(std::span<const std::byte> bytes);

  /// Next complete frame, or nullopt if more bytes are needed. Throws
  /// ProtocolError on a malformed stream.
  std::optional<Frame> next();

  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  uint32_t max_payload_;
  std::vector<std::byte> buf_;
  std::size_t pos_ = 0;
};

}  // namespace p3
