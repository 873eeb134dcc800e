#pragma once

// The single-line response grammar the model is asked to follow:
//   STIFFNESS=[[a,b,c],[d,e,f],[g,h,i]] free-text confirmation

#include <string>
#include <string_view>

#include "teleimp/stiffness.hpp"

namespace teleimp::vlm {

inline constexpr std::string_view kResponseMarker = "STIFFNESS=";

struct StiffnessReply {
  StiffnessMatrix matrix;
  std::string confirmation_text;
  std::string raw_response;
};

/// First well-formed block wins; the marker is matched case-insensitively
/// and whitespace inside the block is ignored. The matrix goes through
/// sanitize_stiffness. Remaining text becomes the confirmation.
/// Throws Error{UnparseableResponse} or Error{InvalidStiffness}.
StiffnessReply parse_stiffness_response(std::string_view raw);

std::string format_stiffness_block(const StiffnessMatrix& k);
std::string format_stiffness_response(const StiffnessMatrix& k, std::string_view confirmation);

/// Short operator-facing confirmation for a phase target.
std::string_view phase_confirmation(TaskPhase phase);

}  // namespace teleimp::vlm
