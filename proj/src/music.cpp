#include "musedit/music.hpp"

namespace musedit {

const std::vector<std::string>& pitch_class_names() {
  static const std::vector<std::string> names = {"C",  "C#", "D",  "D#", "E",  "F",
                                                 "F#", "G",  "G#", "A",  "A#", "B"};
  return names;
}

std::string Chord::label() const {
  if (is_none()) return "N";
  return pitch_class_names()[root] + (minor ? ":min" : ":maj");
}

Chord Chord::from_label(const std::string& s) {
  if (s == "N") return none();
  auto colon = s.find(':');
  ME_CHECK(colon != std::string::npos, "bad chord label: " + s);
  const std::string rt = s.substr(0, colon);
  const std::string qual = s.substr(colon + 1);
  ME_CHECK(qual == "maj" || qual == "min", "bad chord quality: " + s);
  const auto& names = pitch_class_names();
  for (int i = 0; i < 12; ++i)
    if (names[i] == rt) return Chord{i, qual == "min"};
  throw Error("bad chord root: " + s);
}

std::vector<int> Chord::tones() const {
  if (is_none()) return {};
  return {root, (root + (minor ? 3 : 4)) % 12, (root + 7) % 12};
}

Vec Chord::chroma_template() const {
  Vec t = Vec::Zero(12);
  if (is_none()) {
    t.setConstant(1.0 / std::sqrt(12.0));
    return t;
  }
  const auto pcs = tones();
  t[pcs[0]] = 1.0;   // root
  t[pcs[1]] = 0.85;  // third
  t[pcs[2]] = 0.9;   // fifth
  return t / t.norm();
}

Chord Chord::from_class_index(int idx) {
  ME_CHECK(idx >= 0 && idx < kChordClasses, "chord class index out of range");
  if (idx == 24) return none();
  return Chord{idx / 2, (idx % 2) == 1};
}

}  // namespace musedit
