#pragma once

// Speech-to-text seam. Commands normally arrive as text; an audio adapter can
// be plugged in here without touching the session logic.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace teleimp::speech {

class SpeechToText {
 public:
  virtual ~SpeechToText() = default;
  /// Throws Error{Configuration} for unsupported media types.
  virtual std::string transcribe(std::span<const std::uint8_t> audio, std::string_view media_type) = 0;
};

/// Accepts text/plain (UTF-8) bodies as already-transcribed speech.
class TextPassthrough : public SpeechToText {
 public:
  std::string transcribe(std::span<const std::uint8_t> audio, std::string_view media_type) override;
};

}  // namespace teleimp::speech
