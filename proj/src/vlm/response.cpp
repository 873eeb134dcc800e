#include "teleimp/response.hpp"

#include <cctype>
#include <charconv>
#include <optional>

#include "teleimp/error.hpp"

namespace teleimp::vlm {

namespace {

struct Cursor {
  std::string_view s;
  std::size_t i;

  void skip_ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  std::optional<double> number() {
    skip_ws();
    std::size_t start = i;
    if (i < s.size() && s[i] == '+') ++start, ++i;
    double v = 0;
    auto res = std::from_chars(s.data() + start, s.data() + s.size(), v);
    if (res.ec != std::errc{}) return std::nullopt;
    i = static_cast<std::size_t>(res.ptr - s.data());
    return v;
  }
};

// Parses "[[a,b,c],[d,e,f],[g,h,i]]" starting at pos; returns end offset.
std::optional<std::pair<Mat3, std::size_t>> parse_block(std::string_view s, std::size_t pos) {
  Cursor c{s, pos};
  Mat3 m;
  if (!c.eat('[')) return std::nullopt;
  for (int r = 0; r < 3; ++r) {
    if (r > 0 && !c.eat(',')) return std::nullopt;
    if (!c.eat('[')) return std::nullopt;
    for (int col = 0; col < 3; ++col) {
      if (col > 0 && !c.eat(',')) return std::nullopt;
      auto v = c.number();
      if (!v) return std::nullopt;
      m(r, col) = *v;
    }
    if (!c.eat(']')) return std::nullopt;
  }
  if (!c.eat(']')) return std::nullopt;
  return std::make_pair(m, c.i);
}

bool marker_at(std::string_view s, std::size_t pos) {
  const std::string_view word = "STIFFNESS";
  if (pos + word.size() > s.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k)
    if (std::toupper(static_cast<unsigned char>(s[pos + k])) != word[k]) return false;
  return true;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace

StiffnessReply parse_stiffness_response(std::string_view raw) {
  for (std::size_t pos = 0; pos < raw.size(); ++pos) {
    if (!marker_at(raw, pos)) continue;
    Cursor c{raw, pos + 9};
    if (!c.eat('=')) continue;
    auto block = parse_block(raw, c.i);
    if (!block) continue;
    const auto& [m, end] = *block;
    std::string rest = trim(raw.substr(0, pos));
    const std::string after = trim(raw.substr(end));
    if (!rest.empty() && !after.empty()) rest += ' ';
    rest += after;
    if (rest.empty()) rest = "Stiffness updated.";
    return {sanitize_stiffness(m), rest, std::string(raw)};
  }
  throw Error(ErrorKind::UnparseableResponse, "no STIFFNESS=[[...]] block in model response");
}

std::string format_stiffness_block(const StiffnessMatrix& k) {
  std::string out(kResponseMarker);
  out += '[';
  for (int r = 0; r < 3; ++r) {
    if (r > 0) out += ',';
    out += '[';
    for (int c = 0; c < 3; ++c) {
      if (c > 0) out += ',';
      out += format_number(k(r, c));
    }
    out += ']';
  }
  out += ']';
  return out;
}

std::string format_stiffness_response(const StiffnessMatrix& k, std::string_view confirmation) {
  std::string out = format_stiffness_block(k);
  if (!confirmation.empty()) {
    out += ' ';
    out += confirmation;
  }
  return out;
}

std::string_view phase_confirmation(TaskPhase phase) {
  switch (phase) {
    case TaskPhase::Entrance: return "Entering the structure: stiff along z, compliant in x and y.";
    case TaskPhase::YTraverse: return "Following the groove along y: stiff along y, compliant across it.";
    case TaskPhase::XTraverse: return "Following the groove along x: stiff along x, compliant across it.";
    case TaskPhase::YZSlant: return "Climbing the slant: stiff along 45 degrees in the y-z plane.";
  }
  return "";
}

}  // namespace teleimp::vlm
