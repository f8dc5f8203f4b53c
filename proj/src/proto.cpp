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

#include "p3/proto.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace p3 {

namespace {

template <typename T>
void put_le(std::byte* dst, T value) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::byte>((u >> (8 * i)) & 0xFF);
  }
}

template <typename T>
T get_le(const std::byte* src) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(static_cast<U>(src[i]) << (8 * i));
  }
  return static_cast<T>(u);
}

constexpr std::size_t kOffType = 4;
constexpr std::size_t kOffPriority = 5;
constexpr std::size_t kOffIteration = 9;
constexpr std::size_t kOffRank = 17;
constexpr std::size_t kOffLayer = 19;
constexpr std::size_t kOffSlice = 23;
constexpr std::size_t kOffOffset = 27;
constexpr std::size_t kOffPayloadLen = 35;
static_assert(kOffPayloadLen + 4 == kHeaderSize);

}  // namespace

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::push: return "PUSH";
    case MsgType::bcast: return "BCAST";
    case MsgType::pull: return "PULL";
    case MsgType::notify: return "NOTIFY";
    case MsgType::hello: return "HELLO";
    case MsgType::fin: return "FIN";
  }
  return "?";
}

bool carries_payload(MsgType type) {
  return type == MsgType::push || type == MsgType::bcast;
}

bool Frame::operator==(const Frame& o) const {
  if (type != o.type || priority != o.priority || iteration != o.iteration ||
      worker_rank != o.worker_rank || layer_index != o.layer_index ||
      slice_index != o.slice_index || offset != o.offset ||
      values.size() != o.values.size())
    return false;
  // Bitwise so that NaN payloads still compare equal after a round trip.
  return values.empty() ||
         std::memcmp(values.data(), o.values.data(), values.size() * 4) == 0;
}

void encode_into(const Frame& frame, std::vector<std::byte>& out) {
  if (!carries_payload(frame.type) && !frame.values.empty())
    throw ProtocolError(std::string(to_string(frame.type)) +
                        " frame must not carry a payload");
  if (frame.values.size() > std::numeric_limits<uint32_t>::max() / 4)
    throw ProtocolError("payload too large for the length field");

  const std::size_t start = out.size();
  out.resize(start + frame.wire_size());
  std::byte* h = out.data() + start;
  std::memcpy(h, kMagic, 4);
  h[kOffType] = static_cast<std::byte>(frame.type);
  put_le(h + kOffPriority, frame.priority);
  put_le(h + kOffIteration, frame.iteration);
  put_le(h + kOffRank, frame.worker_rank);
  put_le(h + kOffLayer, frame.layer_index);
  put_le(h + kOffSlice, frame.slice_index);
  put_le(h + kOffOffset, frame.offset);
  put_le(h + kOffPayloadLen, frame.payload_len());
  std::byte* p = h + kHeaderSize;
  for (float v : frame.values) {
    put_le(p, std::bit_cast<uint32_t>(v));
    p += 4;
  }
}

std::vector<std::byte> encode(const Frame& frame) {
  std::vector<std::byte> out;
  encode_into(frame, out);
  return out;
}

DecodeResult decode(std::span<const std::byte> bytes, uint32_t max_payload) {
  if (bytes.empty()) return NeedMore{kHeaderSize};
  // Reject a bad magic as soon as the bytes that disagree are visible.
  const std::size_t magic_seen = std::min<std::size_t>(bytes.size(), 4);
  if (std::memcmp(bytes.data(), kMagic, magic_seen) != 0)
    return DecodeError{"bad magic"};
  if (bytes.size() > kOffType &&
      static_cast<uint8_t>(bytes[kOffType]) > static_cast<uint8_t>(MsgType::fin))
    return DecodeError{"unknown msg_type " +
                       std::to_string(static_cast<unsigned>(bytes[kOffType]))};
  if (bytes.size() < kHeaderSize) return NeedMore{kHeaderSize - bytes.size()};

  const std::byte* h = bytes.data();
  Frame f;
  f.type = static_cast<MsgType>(h[kOffType]);
  f.priority = get_le<uint32_t>(h + kOffPriority);
  f.iteration = get_le<uint64_t>(h + kOffIteration);
  f.worker_rank = get_le<uint16_t>(h + kOffRank);
  f.layer_index = get_le<uint32_t>(h + kOffLayer);
  f.slice_index = get_le<uint32_t>(h + kOffSlice);
  f.offset = get_le<uint64_t>(h + kOffOffset);
  const uint32_t payload_len = get_le<uint32_t>(h + kOffPayloadLen);

  if (payload_len > max_payload)
    return DecodeError{"payload_len " + std::to_string(payload_len) +
                       " exceeds limit " + std::to_string(max_payload)};
  if (!carries_payload(f.type) && payload_len != 0)
    return DecodeError{std::string(to_string(f.type)) +
                       " frame with nonzero payload_len"};
  if (payload_len % 4 != 0)
    return DecodeError{"payload_len not a multiple of 4"};
  if (bytes.size() < kHeaderSize + payload_len)
    return NeedMore{kHeaderSize + payload_len - bytes.size()};

  f.values.resize(payload_len / 4);
  const std::byte* p = h + kHeaderSize;
  for (float& v : f.values) {
    v = std::bit_cast<float>(get_le<uint32_t>(p));
    p += 4;
  }
  return Decoded{std::move(f), kHeaderSize + payload_len};
}

void FrameReader::feed(std::span<const std::byte> bytes) {
  if (pos_ > 0 && pos_ * 2 >= buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameReader::next() {
  if (pos_ == buf_.size()) return std::nullopt;
  auto result = decode(std::span<const std::byte>(buf_).subspan(pos_), max_payload_);
  if (auto* d = std::get_if<Decoded>(&result)) {
    pos_ += d->consumed;
    return std::move(d->frame);
  }
  if (auto* e = std::get_if<DecodeError>(&result)) throw ProtocolError(e->message);
  return std::nullopt;
}

}  // namespace p3
