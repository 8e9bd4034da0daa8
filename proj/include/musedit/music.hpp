#pragma once

#include <string>
#include <vector>

#include "musedit/common.hpp"

namespace musedit {

// Triad chord identity: 24 major/minor triads plus "N" (no chord).
struct Chord {
  int root = -1;  // pitch class 0..11, -1 means N
  bool minor = false;

  bool is_none() const { return root < 0; }
  static Chord none() { return Chord{-1, false}; }

  bool operator==(const Chord& o) const {
    return root == o.root && (is_none() || minor == o.minor);
  }

  std::string label() const;
  static Chord from_label(const std::string& s);

  // pitch classes of the triad (empty for N)
  std::vector<int> tones() const;
  // binary chroma template, L2-normalized; N maps to uniform chroma
  Vec chroma_template() const;

  // class index in [0, 24]: root*2 + minor for triads, 24 for N
  int class_index() const { return is_none() ? 24 : root * 2 + (minor ? 1 : 0); }
  static Chord from_class_index(int idx);
};

inline constexpr int kChordClasses = 25;

struct ChordSpan {
  Chord chord;
  double start = 0.0;  // seconds
  double end = 0.0;
};

const std::vector<std::string>& pitch_class_names();

}  // namespace musedit
