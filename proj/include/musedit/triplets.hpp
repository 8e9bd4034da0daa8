#pragma once

#include <string>
#include <utility>
#include <vector>

#include "musedit/instructions.hpp"
#include "musedit/synth.hpp"

namespace musedit {

struct EditTriplet {
  std::string instruction;
  Vec source;
  Vec target;
  EditTask task;
  int sample_rate = 8000;
  // provenance
  std::string source_clip_id;
  std::string target_clip_id;  // differs from source for remix
  std::vector<std::string> source_stems;
  std::vector<std::string> target_stems;
};

struct ClipRef {
  std::string id;
  const StemSet* clip = nullptr;
};

// Add workflow: source mixes i in [1,4] stems, target adds one more; the
// remove triplet is the exact reversal with the instruction rewritten.
std::pair<EditTriplet, EditTriplet> make_add_remove(const ClipRef& clip, uint64_t seed);

// Flip an add triplet into its remove twin (and back). Applying it twice is
// the identity.
EditTriplet invert_add_remove(const EditTriplet& t);

EditTriplet make_extract(const ClipRef& clip, uint64_t seed);
EditTriplet make_replace(const ClipRef& clip, uint64_t seed);

// Remix retrieval matches exact (tempo, chord progression) keys and requires
// a different preset or instrument set. Throws if no partner exists.
EditTriplet make_remix(const ClipRef& clip, const std::vector<ClipRef>& corpus,
                       uint64_t seed);

struct TaskMix {
  double remix = 5.0, add = 1.5, replace = 1.5, extract = 1.0, remove = 1.0;
};

// Largest-remainder allocation of `count` triplets to tasks; counts are
// within 1 of the exact ratio.
std::vector<std::pair<EditKind, int>> allocate_task_counts(int count, const TaskMix& mix);

}  // namespace musedit
