#include <algorithm>
#include <set>

#include "doctest.h"
#include "milpevo/evolve.hpp"
#include "milpevo/seeds.hpp"

using namespace milpevo;

namespace {

std::string marked_block(const std::string& params_line) {
  const auto& mk = code_markers();
  std::string s = "import numpy as np\n\nclass Auction:\n    def get_instance(self):\n        pass\n";
  s += "    " + mk[0] + "\n    " + mk[1] + "\n";
  s += "    def solve(self, instance):\n        pass\n";
  s += "    " + mk[2] + "\n    " + mk[3] + "\n";
  s += "if __name__ == '__main__':\n    parameters = " + params_line + "\n";
  s += "    " + mk[4] + "\n    " + mk[5] + "\n";
  return s;
}

std::vector<MilpClassRecord> seed_pool() {
  std::vector<MilpClassRecord> pool;
  for (SeedClass c : kAllSeedClasses) pool.push_back(seed_record(c));
  return pool;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) {
    s.replace(at, from.size(), to);
  }
  return s;
}

}  // namespace

TEST_CASE("operator names round trip in canonical order") {
  const std::vector<std::string> names = {
      "Formulation_Add", "Topic_Add", "conv_add",  "Cross_Over", "Mutate",
      "Formulation_Mutate", "Mutate_redundancy", "Topic_new", "New", "Delete"};
  for (std::size_t i = 0; i < kAllOperators.size(); ++i) {
    CHECK(to_string(kAllOperators[i]) == names[i]);
    CHECK(parse_operator(names[i]) == kAllOperators[i]);
  }
  CHECK_THROWS_AS(parse_operator("Nope"), Error);
}

TEST_CASE("forced zero draw selects the first operator") {
  CHECK(operator_at(0.0, OperatorWeights{}) == Operator::kFormulationAdd);
}

TEST_CASE("long-solving parents shift weight toward Delete") {
  const OperatorWeights w;
  const auto a = adjusted_weights(w, 160.0);
  CHECK(a[Operator::kDelete] == doctest::Approx(0.8));
  CHECK(a[Operator::kFormulationAdd] == doctest::Approx(0.5));
  CHECK(a[Operator::kTopicAdd] == doctest::Approx(0.25));
  CHECK(a[Operator::kConvAdd] == doctest::Approx(0.25));
  for (Operator op : {Operator::kCrossOver, Operator::kMutate, Operator::kFormulationMutate,
                      Operator::kMutateRedundancy, Operator::kTopicNew, Operator::kNew}) {
    CHECK(a[op] == w[op]);
  }
  const auto b = adjusted_weights(w, 10.0);
  CHECK(b.w == w.w);
  OperatorWeights bad;
  bad[Operator::kNew] = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("operator frequencies pass a chi-square test") {
  for (double parent_seconds : {0.0, 160.0}) {
    const OperatorWeights w = adjusted_weights(OperatorWeights{}, parent_seconds);
    Rng rng(2024);
    const int n = 100000;
    std::array<int, 10> counts{};
    for (int i = 0; i < n; ++i) {
      ++counts[static_cast<std::size_t>(select_operator(rng, OperatorWeights{}, parent_seconds))];
    }
    double total = 0.0;
    for (double x : w.w) total += x;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      const double expected = n * w.w[i] / total;
      chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    // 9 degrees of freedom, p = 0.001.
    CHECK(chi2 < 27.877);
  }
}

TEST_CASE("Formulation_Add names three methods") {
  const auto parent = seed_record(SeedClass::kCA);
  PromptContext ctx;
  Rng rng(3);
  const std::string prompt = build_prompt(Operator::kFormulationAdd, parent, ctx, rng);
  REQUIRE(ctx.methods.size() == 3);
  std::set<std::string> distinct(ctx.methods.begin(), ctx.methods.end());
  CHECK(distinct.size() == 3);
  int named = 0;
  for (const auto& m : formulation_methods()) {
    if (prompt.find(m) != std::string::npos) ++named;
  }
  CHECK(named == 3);
  CHECK(formulation_methods().size() == 12);
}

TEST_CASE("Cross_Over needs a second parent") {
  const auto parent = seed_record(SeedClass::kCA);
  PromptContext ctx;
  Rng rng(3);
  CHECK_THROWS_AS(build_prompt(Operator::kCrossOver, parent, ctx, rng), Error);
  const auto other = seed_record(SeedClass::kIS);
  ctx.second = &other;
  const auto prompt = build_prompt(Operator::kCrossOver, parent, ctx, rng);
  CHECK(prompt.find(other.code) != std::string::npos);
}

TEST_CASE("Delete prompt is the stored template with the parent code") {
  auto parent = seed_record(SeedClass::kNF);
  parent.solve_seconds = 170.0;
  PromptContext ctx;
  Rng rng(9);
  const auto& templates = TemplateSet::builtin();
  const std::string prompt = build_prompt(Operator::kDelete, parent, ctx, rng, templates);
  CHECK(prompt == replace_all(templates.text(Operator::kDelete), "{code}", parent.code));
}

TEST_CASE("Topic_Add needs a topic and Topic_New shows five letters") {
  const auto parent = seed_record(SeedClass::kSC);
  Rng rng(4);
  PromptContext ctx;
  CHECK_THROWS_AS(build_prompt(Operator::kTopicAdd, parent, ctx, rng), Error);
  ctx.topic = Topic{"airline crew scheduling", "set partitioning"};
  const auto p = build_prompt(Operator::kTopicAdd, parent, ctx, rng);
  CHECK(p.find(ctx.topic->text()) != std::string::npos);
  PromptContext letters_ctx;
  letters_ctx.topic = ctx.topic;
  build_prompt(Operator::kTopicNew, parent, letters_ctx, rng);
  CHECK(letters_ctx.letters.size() == 5);
  CHECK(std::set<char>(letters_ctx.letters.begin(), letters_ctx.letters.end()).size() == 5);
  for (char ch : letters_ctx.letters) CHECK((ch >= 'A' && ch <= 'Z'));
}

TEST_CASE("code extraction") {
  const std::string one =
      "Here is the class.\n```python\n" + marked_block("{'n_items': 150, 'n_bids': 750}") + "```\n";
  const auto ex = extract_class_code(one);
  REQUIRE(ex.params.size() == 2);
  CHECK(std::get<std::int64_t>(ex.params.at("n_items")) == 150);
  CHECK(std::get<std::int64_t>(ex.params.at("n_bids")) == 750);
  for (const auto& m : code_markers()) CHECK(ex.code.find(m) == std::string::npos);

  try {
    extract_class_code("No code here, only prose.");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "no-code");
  }

  const std::string two = "```python\n" + marked_block("{'a': 1}") + "```\nRevised:\n```python\n" +
                          marked_block("{'b': 2.5, 'flag': True}") + "```\n";
  const auto last = extract_class_code(two);
  CHECK(last.params.count("a") == 0);
  CHECK(std::get<double>(last.params.at("b")) == 2.5);
  CHECK(std::get<bool>(last.params.at("flag")) == true);
}

TEST_CASE("parameter block errors") {
  CHECK_THROWS_AS(parse_parameter_block("x = 1"), Error);
  CHECK_THROWS_AS(parse_parameter_block("parameters = {'a': {'b': 1}}"), Error);
  CHECK_THROWS_AS(parse_parameter_block("parameters = {a: 1}"), Error);
  CHECK_THROWS_AS(parse_parameter_block("parameters = {'a': np.zeros(3)}"), Error);
  const auto p = parse_parameter_block("parameters = {\n 'n': 3,  # size\n 'name': 'x'\n}");
  CHECK(std::get<std::int64_t>(p.at("n")) == 3);
  CHECK(std::get<std::string>(p.at("name")) == "x");
}

TEST_CASE("topics") {
  Rng rng(1);
  const auto all = generate_topics({"a", "b"}, {"x", "y", "z"}, 6, rng);
  std::set<std::string> seen;
  for (const auto& t : all) seen.insert(t.text());
  CHECK(seen.size() == 6);
  Rng bad(1);
  CHECK_THROWS_AS(generate_topics({"a", "b"}, {"x", "y", "z"}, 7, bad), Error);
  Rng r1(8), r2(8);
  const auto t1 = generate_topics(builtin_applications(), builtin_methodologies(), 50, r1);
  const auto t2 = generate_topics(builtin_applications(), builtin_methodologies(), 50, r2);
  REQUIRE(t1.size() == 50);
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i].text() == t2[i].text());
}

TEST_CASE("run_level attempts K candidates and is deterministic") {
  const auto pool = seed_pool();
  const auto topics = [] {
    Rng rng(0);
    return generate_topics(builtin_applications(), builtin_methodologies(), 40, rng);
  }();
  LevelOptions opt;
  opt.level = 1;
  opt.k = 4;
  opt.topics = &topics;
  MockLlm llm_a(11), llm_b(11);
  Rng ra(77), rb(77);
  const auto a = run_level(pool, opt, llm_a, ra);
  const auto b = run_level(pool, opt, llm_b, rb);
  CHECK(a.records.size() + a.failures.size() == 4);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(record_to_json(a.records[i]) == record_to_json(b.records[i]));
  }
  std::set<std::string> seed_ids;
  for (const auto& s : pool) seed_ids.insert(s.id);
  for (const auto& r : a.records) {
    CHECK(r.level == 1);
    CHECK(!r.parents.empty());
    for (const auto& p : r.parents) CHECK(seed_ids.count(p) == 1);
    for (const auto& m : code_markers()) CHECK(r.code.find(m) != std::string::npos);
    const auto back = record_from_json(record_to_json(r));
    CHECK(record_to_json(back) == record_to_json(r));
    // Native records generate instances in-process.
    if (r.native) CHECK(instantiate(r, r.params, 1).n_vars() > 0);
  }
}

TEST_CASE("instance descriptions") {
  const auto rec = seed_record(SeedClass::kCA);
  const auto inst = instantiate(rec, rec.params, 5);
  const auto d = describe_instance(&rec, inst);
  CHECK_FALSE(d.fallback);
  CHECK(d.text.find("combinatorial auction") != std::string::npos);
  CHECK(d.text.find(std::to_string(inst.n_vars()) + " variables") != std::string::npos);

  MockLlm llm(0);
  const auto m = describe_instance(&rec, inst, &llm);
  CHECK(m.text.rfind("This instance belongs to the class: ", 0) == 0);
  CHECK(m.text.find(d.text) != std::string::npos);

  const auto bare = describe_instance(nullptr, inst);
  CHECK(bare.text.find("combinatorial auction") == std::string::npos);
  CHECK(bare.text.find(std::to_string(inst.n_cons()) + " linear constraints") != std::string::npos);
  const auto sections = describe_mps(write_mps(inst));
  CHECK(sections.find(std::to_string(inst.n_vars())) != std::string::npos);
}

TEST_CASE("templates carry every slot") {
  const auto& t = TemplateSet::builtin();
  for (Operator op : kAllOperators) {
    CHECK(t.text(op).find("{code}") != std::string::npos);
    if (needs_topic(op)) CHECK(t.text(op).find("{topic}") != std::string::npos);
    if (needs_methods(op)) {
      CHECK(t.text(op).find("{three_random_formulation_methods}") != std::string::npos);
    }
    if (needs_letters(op)) CHECK(t.text(op).find("{five_random_letters}") != std::string::npos);
  }
  CHECK(t.text(Operator::kCrossOver).find("{code2}") != std::string::npos);
}
