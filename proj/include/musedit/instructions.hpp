#pragma once

#include <string>
#include <vector>

#include "musedit/common.hpp"

namespace musedit {

enum class EditKind { Add, Remove, Extract, Replace, Remix };

std::string edit_kind_name(EditKind k);
EditKind edit_kind_from_name(const std::string& s);

// One of the five edit tasks. Remix carries either a genre or a non-empty
// instrument list; replace carries exactly two distinct instruments.
struct EditTask {
  EditKind kind = EditKind::Add;
  std::vector<std::string> instruments;
  std::string genre;

  bool is_remix_genre() const { return kind == EditKind::Remix && !genre.empty(); }
  bool operator==(const EditTask& o) const {
    return kind == o.kind && instruments == o.instruments && genre == o.genre;
  }
};

// Throws on invariant violations (unknown tokens, wrong arity).
void validate_task(const EditTask& task);

// Closed templates:
//   "Add {i}" / "Remove {i}" / "Extract {i}" / "Replace {a} with {b}"
//   "Remix with {i, ...}" / "Remix to {genre} genre"
std::string format_instruction(const EditTask& task);
EditTask parse_instruction(const std::string& text);

// Token ids over the closed grammar (verbs + instruments + genres + a null
// token used for classifier-free-guidance condition dropout).
class Grammar {
 public:
  static const Grammar& get();

  int null_id() const { return 0; }
  int vocab_size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token_name(int id) const { return tokens_[id]; }
  int token_id(const std::string& name) const;

  std::vector<int> tokenize(const EditTask& task) const;

 private:
  Grammar();
  std::vector<std::string> tokens_;
};

}  // namespace musedit
