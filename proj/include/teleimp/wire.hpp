#pragma once

// Binary UDP datagrams between the backend and the robot.
//
//   offset 0  'T' 'I'          magic
//          2  version (=1)
//          3  type            1 pose, 2 stiffness, 3 start/stop, 4 telemetry
//          4  seq             u32 little-endian, per type
//          8  payload         little-endian IEEE-754 doubles (start/stop: one byte)
//
// Telemetry carries time, position, velocity, force and three reserved
// slots; reserved[0] echoes the last applied stiffness seq.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "teleimp/stiffness.hpp"

namespace teleimp::wire {

inline constexpr std::uint8_t kMagic0 = 0x54;
inline constexpr std::uint8_t kMagic1 = 0x49;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kMaxDatagram = 128;
inline constexpr double kSymmetryTol = 1e-6;

enum class MsgType : std::uint8_t { Pose = 1, Stiffness = 2, StartStop = 3, Telemetry = 4 };

struct PoseCmd {
  Vec3 position = Vec3::Zero();
  bool operator==(const PoseCmd&) const = default;
};
struct StiffnessUpdate {
  Mat3 k = Mat3::Zero();
  bool operator==(const StiffnessUpdate&) const = default;
};
struct StartStop {
  bool engage = false;
  bool operator==(const StartStop&) const = default;
};
struct Telemetry {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 force = Vec3::Zero();
  std::array<double, 3> reserved{};
  bool operator==(const Telemetry&) const = default;
};

using Body = std::variant<PoseCmd, StiffnessUpdate, StartStop, Telemetry>;

struct Message {
  std::uint32_t seq = 0;
  Body body;

  MsgType type() const;
  bool operator==(const Message&) const = default;
};

/// Exact datagram size for a type.
std::size_t datagram_size(MsgType type);

std::vector<std::uint8_t> encode(const Message& msg);

enum class DecodeError { BadMagic, BadVersion, BadType, BadLength, AsymmetricStiffness };
std::string_view to_string(DecodeError e);

/// Never reads outside `bytes`. A start/stop byte other than 0 or 1 is
/// reported as BadType.
std::variant<Message, DecodeError> decode(std::span<const std::uint8_t> bytes);

}  // namespace teleimp::wire
