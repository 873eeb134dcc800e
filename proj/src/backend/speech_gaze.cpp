#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "teleimp/error.hpp"
#include "teleimp/gaze_log.hpp"
#include "teleimp/speech.hpp"

namespace teleimp {

std::string speech::TextPassthrough::transcribe(std::span<const std::uint8_t> audio, std::string_view media_type) {
  if (media_type.substr(0, 10) != "text/plain")
    throw Error(ErrorKind::Configuration, "no speech-to-text engine for " + std::string(media_type));
  return {audio.begin(), audio.end()};
}

namespace gaze {

namespace {

double field(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorKind::Configuration, "gaze log line " + std::to_string(line) + ": bad number '" +
                                              std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<GazeSample> parse_gaze_csv(std::string_view text) {
  std::vector<GazeSample> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    if (line_no == 1 && line.find("time") != std::string_view::npos) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw Error(ErrorKind::Configuration, "gaze log line " + std::to_string(line_no) + ": expected time,u,v");
    out.push_back({field(line.substr(0, c1), line_no), field(line.substr(c1 + 1, c2 - c1 - 1), line_no),
                   field(line.substr(c2 + 1), line_no)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return out;
}

std::vector<GazeSample> load_gaze_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read gaze log " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_gaze_csv(ss.str());
}

std::optional<GazeSample> gaze_at(const std::vector<GazeSample>& samples, double t) {
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](double x, const GazeSample& s) { return x < s.time; });
  if (it == samples.begin()) return std::nullopt;
  return *std::prev(it);
}

}  // namespace gaze
}  // namespace teleimp
