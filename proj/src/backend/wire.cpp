#include "teleimp/wire.hpp"

#include <bit>
#include <cmath>

namespace teleimp::wire {

MsgType Message::type() const {
  switch (body.index()) {
    case 0: return MsgType::Pose;
    case 1: return MsgType::Stiffness;
    case 2: return MsgType::StartStop;
    default: return MsgType::Telemetry;
  }
}

std::size_t datagram_size(MsgType type) {
  switch (type) {
    case MsgType::Pose: return kHeaderSize + 3 * 8;
    case MsgType::Stiffness: return kHeaderSize + 9 * 8;
    case MsgType::StartStop: return kHeaderSize + 1;
    case MsgType::Telemetry: return kHeaderSize + 13 * 8;
  }
  return 0;
}

std::string_view to_string(DecodeError e) {
  switch (e) {
    case DecodeError::BadMagic: return "bad_magic";
    case DecodeError::BadVersion: return "bad_version";
    case DecodeError::BadType: return "bad_type";
    case DecodeError::BadLength: return "bad_length";
    case DecodeError::AsymmetricStiffness: return "asymmetric_stiffness";
  }
  return "?";
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void put_vec(std::vector<std::uint8_t>& out, const Vec3& v) {
  for (int i = 0; i < 3; ++i) put_f64(out, v[i]);
}

Vec3 get_vec(const std::uint8_t* p) { return {get_f64(p), get_f64(p + 8), get_f64(p + 16)}; }

}  // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
  const MsgType type = msg.type();
  std::vector<std::uint8_t> out;
  out.reserve(datagram_size(type));
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(type));
  put_u32(out, msg.seq);
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, PoseCmd>) {
          put_vec(out, b.position);
        } else if constexpr (std::is_same_v<T, StiffnessUpdate>) {
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) put_f64(out, b.k(r, c));
        } else if constexpr (std::is_same_v<T, StartStop>) {
          out.push_back(b.engage ? 1 : 0);
        } else {
          put_f64(out, b.time);
          put_vec(out, b.position);
          put_vec(out, b.velocity);
          put_vec(out, b.force);
          for (double r : b.reserved) put_f64(out, r);
        }
      },
      msg.body);
  return out;
}

std::variant<Message, DecodeError> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != kMagic0 || bytes[1] != kMagic1) return DecodeError::BadMagic;
  if (bytes.size() < 3 || bytes[2] != kVersion) return DecodeError::BadVersion;
  if (bytes.size() < 4) return DecodeError::BadLength;
  const std::uint8_t t = bytes[3];
  if (t < 1 || t > 4) return DecodeError::BadType;
  const auto type = static_cast<MsgType>(t);
  if (bytes.size() != datagram_size(type)) return DecodeError::BadLength;

  Message msg;
  msg.seq = get_u32(bytes.data() + 4);
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  switch (type) {
    case MsgType::Pose:
      msg.body = PoseCmd{get_vec(p)};
      break;
    case MsgType::Stiffness: {
      StiffnessUpdate s;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) s.k(r, c) = get_f64(p + 8 * (3 * r + c));
      for (int r = 0; r < 3; ++r)
        for (int c = r + 1; c < 3; ++c)
          if (!(std::abs(s.k(r, c) - s.k(c, r)) <= kSymmetryTol)) return DecodeError::AsymmetricStiffness;
      msg.body = s;
      break;
    }
    case MsgType::StartStop:
      if (p[0] > 1) return DecodeError::BadType;
      msg.body = StartStop{p[0] == 1};
      break;
    case MsgType::Telemetry: {
      Telemetry tm;
      tm.time = get_f64(p);
      tm.position = get_vec(p + 8);
      tm.velocity = get_vec(p + 32);
      tm.force = get_vec(p + 56);
      for (int i = 0; i < 3; ++i) tm.reserved[i] = get_f64(p + 80 + 8 * i);
      msg.body = tm;
      break;
    }
  }
  return msg;
}

}  // namespace teleimp::wire
