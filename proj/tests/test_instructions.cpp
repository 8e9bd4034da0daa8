#include <doctest.h>

#include "musedit/instructions.hpp"
#include "musedit/rng.hpp"
#include "musedit/synth.hpp"

using namespace musedit;

TEST_SUITE_BEGIN("instructions");

TEST_CASE("templates format exactly") {
  CHECK(format_instruction({EditKind::Add, {"piano"}, ""}) == "Add piano");
  CHECK(format_instruction({EditKind::Remove, {"bass"}, ""}) == "Remove bass");
  CHECK(format_instruction({EditKind::Extract, {"drums"}, ""}) == "Extract drums");
  CHECK(format_instruction({EditKind::Replace, {"flute", "accordion"}, ""}) ==
        "Replace flute with accordion");
  CHECK(format_instruction({EditKind::Remix, {"bass", "piano", "strings"}, ""}) ==
        "Remix with bass, piano, strings");
  CHECK(format_instruction({EditKind::Remix, {}, "rock"}) == "Remix to rock genre");
}

TEST_CASE("parsing the paper-style examples") {
  EditTask t = parse_instruction("Replace flute with accordion");
  CHECK(t.kind == EditKind::Replace);
  CHECK(t.instruments == std::vector<std::string>{"flute", "accordion"});
  t = parse_instruction("Add piano");
  CHECK(t.kind == EditKind::Add);
  CHECK(t.instruments == std::vector<std::string>{"piano"});
  t = parse_instruction("Remix with guitar, bass, drums");
  CHECK(t.kind == EditKind::Remix);
  CHECK(t.instruments == std::vector<std::string>{"guitar", "bass", "drums"});
  t = parse_instruction("Remix to jazz genre");
  CHECK(t.genre == "jazz");
}

TEST_CASE("unknown tokens are rejected") {
  CHECK_THROWS_AS(parse_instruction("Add theremin"), Error);
  CHECK_THROWS_AS(parse_instruction("Remix to dubstep genre"), Error);
  CHECK_THROWS_AS(parse_instruction("Remove "), Error);
  CHECK_THROWS_AS(parse_instruction("do something nice"), Error);
  CHECK_THROWS_AS(parse_instruction("Replace piano with piano"), Error);
}

TEST_CASE("task invariants are enforced") {
  CHECK_THROWS_AS(validate_task({EditKind::Replace, {"piano"}, ""}), Error);
  CHECK_THROWS_AS(validate_task({EditKind::Replace, {"piano", "piano"}, ""}), Error);
  CHECK_THROWS_AS(validate_task({EditKind::Remix, {}, ""}), Error);
  CHECK_THROWS_AS(validate_task({EditKind::Remix, {"piano"}, "rock"}), Error);
  CHECK_THROWS_AS(validate_task({EditKind::Add, {"piano", "bass"}, ""}), Error);
  CHECK_NOTHROW(validate_task({EditKind::Remix, {"piano"}, ""}));
}

namespace {

EditTask random_task(Rng& rng) {
  std::vector<std::string> insts;
  for (const auto& i : instrument_vocabulary()) insts.push_back(i.name);
  std::vector<std::string> genres;
  for (const auto& g : genre_presets()) genres.push_back(g.name);
  EditTask t;
  switch (rng.uniform_int(0, 5)) {
    case 0: t = {EditKind::Add, {insts[rng.uniform_int(0, insts.size() - 1)]}, ""}; break;
    case 1: t = {EditKind::Remove, {insts[rng.uniform_int(0, insts.size() - 1)]}, ""}; break;
    case 2: t = {EditKind::Extract, {insts[rng.uniform_int(0, insts.size() - 1)]}, ""}; break;
    case 3: {
      int a = rng.uniform_int(0, insts.size() - 1);
      int b = rng.uniform_int(0, insts.size() - 2);
      if (b >= a) ++b;
      t = {EditKind::Replace, {insts[a], insts[b]}, ""};
      break;
    }
    case 4: {
      int n = rng.uniform_int(1, 4);
      std::vector<std::string> pool = insts;
      std::vector<std::string> list;
      for (int k = 0; k < n; ++k) {
        int j = rng.uniform_int(0, pool.size() - 1);
        list.push_back(pool[j]);
        pool.erase(pool.begin() + j);
      }
      t = {EditKind::Remix, list, ""};
      break;
    }
    default: t = {EditKind::Remix, {}, genres[rng.uniform_int(0, genres.size() - 1)]};
  }
  return t;
}

}  // namespace

TEST_CASE("round trip holds for 1000 random tasks") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    EditTask t = random_task(rng);
    EditTask back = parse_instruction(format_instruction(t));
    CHECK(back == t);
  }
}

TEST_CASE("token sequences are injective over a bounded enumeration") {
  Rng rng(7);
  std::vector<std::vector<int>> seqs;
  std::vector<std::string> texts;
  std::vector<std::string> insts;
  for (const auto& i : instrument_vocabulary()) insts.push_back(i.name);
  auto push = [&](const EditTask& t) {
    seqs.push_back(Grammar::get().tokenize(t));
    texts.push_back(format_instruction(t));
  };
  for (const auto& i : insts) {
    push({EditKind::Add, {i}, ""});
    push({EditKind::Remove, {i}, ""});
    push({EditKind::Extract, {i}, ""});
    push({EditKind::Remix, {i}, ""});
    for (const auto& j : insts) {
      if (i == j) continue;
      push({EditKind::Replace, {i, j}, ""});
      push({EditKind::Remix, {i, j}, ""});
    }
  }
  for (const auto& g : genre_presets()) push({EditKind::Remix, {}, g.name});
  for (size_t a = 0; a < seqs.size(); ++a)
    for (size_t b = a + 1; b < seqs.size(); ++b) {
      INFO(texts[a], " vs ", texts[b]);
      CHECK(seqs[a] != seqs[b]);
    }
}

TEST_CASE("tokenization lengths match the grammar") {
  CHECK(Grammar::get().tokenize(parse_instruction("Add piano")).size() == 2);
  CHECK(Grammar::get().tokenize(parse_instruction("Replace flute with accordion")).size() == 3);
  CHECK(Grammar::get().tokenize(parse_instruction("Remix with bass, piano, strings")).size() == 4);
  CHECK(Grammar::get().tokenize(parse_instruction("Remix to rock genre")).size() == 2);
}

TEST_SUITE_END();
