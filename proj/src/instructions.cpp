#include "musedit/instructions.hpp"

#include <algorithm>

#include "musedit/synth.hpp"

namespace musedit {

std::string edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::Add: return "add";
    case EditKind::Remove: return "remove";
    case EditKind::Extract: return "extract";
    case EditKind::Replace: return "replace";
    case EditKind::Remix: return "remix";
  }
  throw Error("bad edit kind");
}

EditKind edit_kind_from_name(const std::string& s) {
  if (s == "add") return EditKind::Add;
  if (s == "remove") return EditKind::Remove;
  if (s == "extract") return EditKind::Extract;
  if (s == "replace") return EditKind::Replace;
  if (s == "remix") return EditKind::Remix;
  throw Error("bad edit kind: " + s);
}

void validate_task(const EditTask& task) {
  switch (task.kind) {
    case EditKind::Add:
    case EditKind::Remove:
    case EditKind::Extract:
      ME_CHECK(task.instruments.size() == 1 && task.genre.empty(),
               "task: expects exactly one instrument");
      break;
    case EditKind::Replace:
      ME_CHECK(task.instruments.size() == 2 && task.genre.empty(),
               "task: replace expects two instruments");
      ME_CHECK(task.instruments[0] != task.instruments[1],
               "task: replace instruments must differ");
      break;
    case EditKind::Remix:
      ME_CHECK(task.genre.empty() != task.instruments.empty(),
               "task: remix carries either a genre or an instrument list");
      if (!task.genre.empty()) ME_CHECK(is_known_genre(task.genre),
                                        "task: unknown genre " + task.genre);
      break;
  }
  for (const auto& i : task.instruments)
    ME_CHECK(is_known_instrument(i), "task: unknown instrument " + i);
}

std::string format_instruction(const EditTask& task) {
  validate_task(task);
  switch (task.kind) {
    case EditKind::Add: return "Add " + task.instruments[0];
    case EditKind::Remove: return "Remove " + task.instruments[0];
    case EditKind::Extract: return "Extract " + task.instruments[0];
    case EditKind::Replace:
      return "Replace " + task.instruments[0] + " with " + task.instruments[1];
    case EditKind::Remix: {
      if (!task.genre.empty()) return "Remix to " + task.genre + " genre";
      std::string s = "Remix with ";
      for (size_t i = 0; i < task.instruments.size(); ++i) {
        if (i) s += ", ";
        s += task.instruments[i];
      }
      return s;
    }
  }
  throw Error("bad edit kind");
}

namespace {

bool consume_prefix(std::string& s, const std::string& prefix) {
  if (s.rfind(prefix, 0) != 0) return false;
  s = s.substr(prefix.size());
  return true;
}

std::string require_instrument(const std::string& tok) {
  ME_CHECK(is_known_instrument(tok), "parse: unknown instrument token '" + tok + "'");
  return tok;
}

}  // namespace

EditTask parse_instruction(const std::string& text) {
  std::string s = text;
  EditTask t;
  if (consume_prefix(s, "Add ")) {
    t.kind = EditKind::Add;
    t.instruments = {require_instrument(s)};
  } else if (consume_prefix(s, "Remove ")) {
    t.kind = EditKind::Remove;
    t.instruments = {require_instrument(s)};
  } else if (consume_prefix(s, "Extract ")) {
    t.kind = EditKind::Extract;
    t.instruments = {require_instrument(s)};
  } else if (consume_prefix(s, "Replace ")) {
    t.kind = EditKind::Replace;
    const auto sep = s.find(" with ");
    ME_CHECK(sep != std::string::npos, "parse: malformed replace instruction");
    t.instruments = {require_instrument(s.substr(0, sep)),
                     require_instrument(s.substr(sep + 6))};
  } else if (consume_prefix(s, "Remix to ")) {
    t.kind = EditKind::Remix;
    ME_CHECK(s.size() > 6 && s.substr(s.size() - 6) == " genre",
             "parse: malformed remix-to instruction");
    t.genre = s.substr(0, s.size() - 6);
    ME_CHECK(is_known_genre(t.genre), "parse: unknown genre token '" + t.genre + "'");
  } else if (consume_prefix(s, "Remix with ")) {
    t.kind = EditKind::Remix;
    size_t pos = 0;
    while (pos <= s.size()) {
      auto comma = s.find(", ", pos);
      const std::string tok =
          comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos);
      t.instruments.push_back(require_instrument(tok));
      if (comma == std::string::npos) break;
      pos = comma + 2;
    }
  } else {
    throw Error("parse: unrecognized instruction '" + text + "'");
  }
  validate_task(t);
  return t;
}

Grammar::Grammar() {
  tokens_ = {"<null>", "<add>", "<remove>", "<extract>", "<replace>",
             "<remix_with>", "<remix_to>"};
  for (const auto& inst : instrument_vocabulary()) tokens_.push_back(inst.name);
  for (const auto& p : genre_presets()) tokens_.push_back("genre:" + p.name);
}

const Grammar& Grammar::get() {
  static const Grammar g;
  return g;
}

int Grammar::token_id(const std::string& name) const {
  for (size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == name) return static_cast<int>(i);
  throw Error("grammar: unknown token " + name);
}

std::vector<int> Grammar::tokenize(const EditTask& task) const {
  validate_task(task);
  std::vector<int> ids;
  switch (task.kind) {
    case EditKind::Add: ids.push_back(token_id("<add>")); break;
    case EditKind::Remove: ids.push_back(token_id("<remove>")); break;
    case EditKind::Extract: ids.push_back(token_id("<extract>")); break;
    case EditKind::Replace: ids.push_back(token_id("<replace>")); break;
    case EditKind::Remix:
      ids.push_back(token_id(task.genre.empty() ? "<remix_with>" : "<remix_to>"));
      break;
  }
  for (const auto& i : task.instruments) ids.push_back(token_id(i));
  if (!task.genre.empty()) ids.push_back(token_id("genre:" + task.genre));
  return ids;
}

}  // namespace musedit
