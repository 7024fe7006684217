#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <bit>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "weft/corpus.hpp"
#include "weft/error.hpp"

using namespace weft;

namespace {

TaskSpec binary_spec(const std::string& id) {
  TaskSpec spec;
  spec.task_id = id;
  spec.head_kind = HeadKind::single_class;
  spec.labels = {"neg", "pos"};
  spec.role = TaskRole::target;
  return spec;
}

AnnotationRecord make_record(const std::string& id,
                             std::array<AnnotatorAnswers, 3> answers) {
  AnnotationRecord rec;
  rec.example_id = id;
  rec.answers = answers;
  return rec;
}

} // namespace

TEST_CASE("question-to-label precedence covers all eight combinations") {
  for (int mask = 0; mask < 8; ++mask) {
    const bool q1 = mask & 1, q2 = mask & 2, q3 = mask & 4;
    const auto label = map_questions_to_label(q1, q2, q3);
    if (q1) REQUIRE(label.category == StereotypeCategory::explicit_stereotype);
    else if (q2) REQUIRE(label.category == StereotypeCategory::implicit_stereotype);
    else REQUIRE(label.category == StereotypeCategory::non_stereotype);
    REQUIRE(label.unnatural == q3);
  }
}

TEST_CASE("aggregation takes the per-question majority over three annotators") {
  // Enumerate all 2^3 yes/no patterns per question and confirm the majority
  // rule: aggregated yes iff at least two annotators answered yes.
  for (int m1 = 0; m1 < 8; ++m1) {
    for (int m2 = 0; m2 < 8; ++m2) {
      for (int m3 = 0; m3 < 8; ++m3) {
        std::array<AnnotatorAnswers, 3> answers;
        for (int a = 0; a < 3; ++a)
          answers[a] = {bool(m1 >> a & 1), bool(m2 >> a & 1), bool(m3 >> a & 1)};
        const auto agg = aggregate_annotations({make_record("x", answers)});
        REQUIRE(agg.size() == 1);
        const int c1 = std::popcount(static_cast<unsigned>(m1));
        const int c2 = std::popcount(static_cast<unsigned>(m2));
        const int c3 = std::popcount(static_cast<unsigned>(m3));
        const auto expected = map_questions_to_label(c1 >= 2, c2 >= 2, c3 >= 2);
        REQUIRE(agg.at("x").category == expected.category);
        REQUIRE(agg.at("x").unnatural == expected.unnatural);
      }
    }
  }
}

TEST_CASE("aggregation reproduces the worked majority examples") {
  // q1 (yes, yes, no), q2 all no, q3 all no -> explicit, natural
  auto agg = aggregate_annotations({make_record(
      "e1", {AnnotatorAnswers{true, false, false}, AnnotatorAnswers{true, false, false},
             AnnotatorAnswers{false, false, false}})});
  REQUIRE(agg.at("e1").category == StereotypeCategory::explicit_stereotype);
  REQUIRE_FALSE(agg.at("e1").unnatural);

  // q1 all no, q2 (yes, no, yes), q3 (no, yes, no) -> implicit, natural
  agg = aggregate_annotations({make_record(
      "e2", {AnnotatorAnswers{false, true, false}, AnnotatorAnswers{false, false, true},
             AnnotatorAnswers{false, true, false}})});
  REQUIRE(agg.at("e2").category == StereotypeCategory::implicit_stereotype);
  REQUIRE_FALSE(agg.at("e2").unnatural);
}

TEST_CASE("aggregation is invariant to annotator order") {
  std::array<AnnotatorAnswers, 3> answers = {
      AnnotatorAnswers{true, false, true}, AnnotatorAnswers{false, true, true},
      AnnotatorAnswers{true, true, false}};
  const auto base = aggregate_annotations({make_record("x", answers)}).at("x");
  std::sort(answers.begin(), answers.end(), [](const auto& a, const auto& b) {
    return std::tie(a.q1, a.q2, a.q3) < std::tie(b.q1, b.q2, b.q3);
  });
  do {
    const auto perm = aggregate_annotations({make_record("x", answers)}).at("x");
    REQUIRE(perm.category == base.category);
    REQUIRE(perm.unnatural == base.unnatural);
  } while (std::next_permutation(
      answers.begin(), answers.end(), [](const auto& a, const auto& b) {
        return std::tie(a.q1, a.q2, a.q3) < std::tie(b.q1, b.q2, b.q3);
      }));
}

TEST_CASE("annotation loader enforces exactly three annotator tuples") {
  const auto dir = testsup::scratch_dir("annotations");
  const auto path = (dir / "ann.jsonl").string();

  testsup::write_file(
      path,
      R"({"example_id": "a", "text": "some sentence", "answers": [{"q1": true, "q2": false, "q3": false}, {"q1": true, "q2": false, "q3": false}, {"q1": false, "q2": false, "q3": true}]})"
      "\n");
  std::map<std::string, std::string> texts;
  const auto records = load_annotations(path, &texts);
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].example_id == "a");
  REQUIRE(records[0].answers[0].q1);
  REQUIRE(records[0].answers[2].q3);
  REQUIRE(texts.at("a") == "some sentence");

  testsup::write_file(
      path,
      R"({"example_id": "a", "answers": [{"q1": true, "q2": false, "q3": false}, {"q1": true, "q2": false, "q3": false}]})"
      "\n");
  REQUIRE_THROWS_AS(load_annotations(path), integrity_error);

  testsup::write_file(
      path,
      R"({"example_id": "a", "answers": [{"q1": true, "q2": false}, {"q1": true, "q2": false, "q3": false}, {"q1": false, "q2": false, "q3": false}]})"
      "\n");
  REQUIRE_THROWS_AS(load_annotations(path), parse_error);

  REQUIRE_THROWS_AS(load_annotations((dir / "missing.jsonl").string()), data_error);
}

TEST_CASE("released-scale aggregation reproduces the reference distribution") {
  // 2221 records with varied annotator patterns whose majorities break down
  // as 742 explicit, 282 implicit, 1197 non-stereotype.
  std::vector<AnnotationRecord> records;
  auto push = [&](const std::string& id, std::array<AnnotatorAnswers, 3> a) {
    records.push_back(make_record(id, a));
  };
  for (int i = 0; i < 742; ++i) {
    // majority yes on q1 through three different patterns
    std::array<AnnotatorAnswers, 3> a{};
    a[0].q1 = true;
    a[1].q1 = true;
    a[2].q1 = i % 3 == 0;
    a[1].q2 = i % 2 == 0; // q1 wins regardless of q2
    push("explicit-" + std::to_string(i), a);
  }
  for (int i = 0; i < 282; ++i) {
    std::array<AnnotatorAnswers, 3> a{};
    a[0].q1 = i % 4 == 0; // a single q1 yes stays in the minority
    a[0].q2 = true;
    a[2].q2 = true;
    a[1].q3 = i % 5 == 0;
    push("implicit-" + std::to_string(i), a);
  }
  for (int i = 0; i < 1197; ++i) {
    std::array<AnnotatorAnswers, 3> a{};
    a[i % 3].q1 = i % 2 == 0; // at most one yes per question
    a[(i + 1) % 3].q2 = i % 7 == 0;
    push("non-" + std::to_string(i), a);
  }
  REQUIRE(records.size() == 2221);

  const auto agg = aggregate_annotations(records);
  REQUIRE(agg.size() == 2221);
  std::map<StereotypeCategory, std::size_t> counts;
  for (const auto& [id, label] : agg) ++counts[label.category];
  REQUIRE(counts[StereotypeCategory::explicit_stereotype] == 742);
  REQUIRE(counts[StereotypeCategory::implicit_stereotype] == 282);
  REQUIRE(counts[StereotypeCategory::non_stereotype] == 1197);
}

TEST_CASE("dataset loader splits records and captures metadata") {
  const auto dir = testsup::scratch_dir("dataset_load");
  const auto path = (dir / "task.jsonl").string();
  testsup::write_file(
      path,
      R"({"example_id": "t-0", "text": "alpha", "task_id": "demo", "labels": ["pos"], "split": "train", "metadata": {"source": "unit", "weight": 2, "flag": true}})"
      "\n"
      R"({"example_id": "t-1", "text": "beta", "task_id": "demo", "labels": ["neg"], "split": "validation"})"
      "\n"
      R"({"example_id": "t-2", "text": "gamma", "task_id": "demo", "labels": ["pos"], "split": "test"})"
      "\n");
  const auto ds = load_dataset(path, binary_spec("demo"));
  REQUIRE(ds.train.size() == 1);
  REQUIRE(ds.validation.size() == 1);
  REQUIRE(ds.test.size() == 1);
  REQUIRE(ds.train[0].example_id == "t-0");
  REQUIRE(ds.train[0].gold_labels == std::set<std::string>{"pos"});
  REQUIRE(ds.train[0].metadata.at("source") == "unit");
  REQUIRE(ds.train[0].metadata.at("weight") == "2");
  REQUIRE(ds.train[0].metadata.at("flag") == "true");
  REQUIRE(ds.validation[0].text == "beta");
}

TEST_CASE("records without a split default to train") {
  const auto dir = testsup::scratch_dir("dataset_default_split");
  const auto path = (dir / "task.jsonl").string();
  testsup::write_file(
      path,
      R"({"example_id": "t-0", "text": "alpha", "task_id": "demo", "labels": ["pos"]})"
      "\n");
  const auto ds = load_dataset(path, binary_spec("demo"));
  REQUIRE(ds.train.size() == 1);
  REQUIRE(ds.validation.empty());
  REQUIRE(ds.test.empty());
}

TEST_CASE("dataset loader rejects malformed and inconsistent records") {
  const auto dir = testsup::scratch_dir("dataset_errors");
  const auto path = (dir / "task.jsonl").string();
  const auto spec = binary_spec("demo");

  auto expect = [&](const std::string& body, auto tag) {
    testsup::write_file(path, body);
    REQUIRE_THROWS_AS(load_dataset(path, spec), decltype(tag));
  };

  // two gold labels under a single-class head
  expect(R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["pos", "neg"]})"
         "\n",
         schema_error{""});
  // label outside the task's label set
  expect(R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["maybe"]})"
         "\n",
         schema_error{""});
  // unknown top-level field
  expect(R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["pos"], "extra": 1})"
         "\n",
         parse_error{""});
  // malformed JSON
  expect("{not json\n", parse_error{""});
  // unknown split name
  expect(R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["pos"], "split": "dev"})"
         "\n",
         parse_error{""});
  // task_id mismatch
  expect(R"({"example_id": "a", "text": "x", "task_id": "other", "labels": ["pos"]})"
         "\n",
         schema_error{""});
  // duplicate example_id
  expect(R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["pos"]})"
         "\n"
         R"({"example_id": "a", "text": "y", "task_id": "demo", "labels": ["neg"]})"
         "\n",
         integrity_error{""});

  // parse errors carry the offending line number
  testsup::write_file(
      path,
      R"({"example_id": "a", "text": "x", "task_id": "demo", "labels": ["pos"]})"
      "\n"
      "{broken\n");
  try {
    load_dataset(path, spec);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("dataset write and reload round-trips every field") {
  const auto dir = testsup::scratch_dir("dataset_roundtrip");
  DatasetSplit ds;
  Example ex;
  ex.example_id = "r-0";
  ex.text = "round trip";
  ex.task_id = "demo";
  ex.gold_labels = {"pos"};
  ex.metadata["corrupted"] = "true";
  ds.train.push_back(ex);
  ex.example_id = "r-1";
  ex.text = "second";
  ex.gold_labels = {"neg"};
  ex.metadata.clear();
  ds.validation.push_back(ex);
  ex.example_id = "r-2";
  ds.test.push_back(ex);

  const auto path = (dir / "out.jsonl").string();
  write_dataset(path, ds);
  const auto back = load_dataset(path, binary_spec("demo"));
  REQUIRE(back.train.size() == 1);
  REQUIRE(back.validation.size() == 1);
  REQUIRE(back.test.size() == 1);
  REQUIRE(back.train[0].example_id == "r-0");
  REQUIRE(back.train[0].text == "round trip");
  REQUIRE(back.train[0].gold_labels == std::set<std::string>{"pos"});
  REQUIRE(back.train[0].metadata.at("corrupted") == "true");
  REQUIRE(back.validation[0].metadata.empty());
  REQUIRE(back.test[0].example_id == "r-2");
}

TEST_CASE("dataset stats count labels across every split") {
  DatasetSplit ds;
  auto add = [&](std::vector<Example>& part, const std::string& id,
                 std::set<std::string> labels) {
    Example ex;
    ex.example_id = id;
    ex.text = id;
    ex.task_id = "demo";
    ex.gold_labels = std::move(labels);
    part.push_back(std::move(ex));
  };
  add(ds.train, "a", {"pos"});
  add(ds.train, "b", {"neg"});
  add(ds.validation, "c", {"pos"});
  add(ds.test, "d", {"pos", "neg"});

  const auto stats = dataset_stats(ds);
  REQUIRE(stats.total == 4);
  REQUIRE(stats.train == 2);
  REQUIRE(stats.validation == 1);
  REQUIRE(stats.test == 1);
  REQUIRE(stats.per_label.at("pos") == 3);
  REQUIRE(stats.per_label.at("neg") == 2);
}

TEST_CASE("loader without a task spec checks shape and id uniqueness only") {
  const auto dir = testsup::scratch_dir("dataset_any");
  const auto path = (dir / "mixed.jsonl").string();
  testsup::write_file(
      path,
      R"({"example_id": "a", "text": "x", "task_id": "t1", "labels": ["anything"]})"
      "\n"
      R"({"example_id": "b", "text": "y", "task_id": "t2", "labels": ["pos", "neg"], "split": "test"})"
      "\n");
  const auto ds = load_dataset_any(path);
  REQUIRE(ds.train.size() == 1);
  REQUIRE(ds.test.size() == 1);

  testsup::write_file(
      path,
      R"({"example_id": "a", "text": "x", "task_id": "t1", "labels": ["l"]})"
      "\n"
      R"({"example_id": "a", "text": "y", "task_id": "t1", "labels": ["l"]})"
      "\n");
  REQUIRE_THROWS_AS(load_dataset_any(path), integrity_error);
}

namespace {

Example coarse_example(const std::string& id, bool positive) {
  Example ex;
  ex.example_id = id;
  ex.text = "text " + id;
  ex.task_id = "source";
  ex.gold_labels = {positive ? "stereotype" : "non-stereotype"};
  return ex;
}

} // namespace

TEST_CASE("coarse merge splits by floor ratios after a seeded shuffle") {
  std::vector<Example> pos = {coarse_example("p0", true), coarse_example("p1", true)};
  std::vector<Example> neg = {coarse_example("n0", false), coarse_example("n1", false)};

  const SplitRatios ratios{0.5, 0.25, 0.25};
  const auto ds = build_coarse_stereotype({pos}, neg, "coarse", ratios, 11);
  REQUIRE(ds.train.size() == 2);
  REQUIRE(ds.validation.size() == 1);
  REQUIRE(ds.test.size() == 1);
  for (const auto* part : {&ds.train, &ds.validation, &ds.test})
    for (const auto& ex : *part) REQUIRE(ex.task_id == "coarse");

  // same seed reproduces the same assignment, a different seed may not
  const auto again = build_coarse_stereotype({pos}, neg, "coarse", ratios, 11);
  REQUIRE(again.train[0].example_id == ds.train[0].example_id);
  REQUIRE(again.test[0].example_id == ds.test[0].example_id);
}

TEST_CASE("coarse merge deduplicates ids and flags polarity conflicts") {
  std::vector<Example> pos = {coarse_example("p0", true), coarse_example("p0", true),
                              coarse_example("p1", true)};
  std::vector<Example> neg = {coarse_example("n0", false)};
  const auto ds =
      build_coarse_stereotype({pos}, neg, "coarse", SplitRatios{1.0, 0.0, 0.0}, 3);
  REQUIRE(ds.size() == 3); // duplicate p0 merged

  std::vector<Example> conflicting = {coarse_example("p0", false)};
  REQUIRE_THROWS_AS(build_coarse_stereotype({pos}, conflicting, "coarse",
                                            SplitRatios{1.0, 0.0, 0.0}, 3),
                    integrity_error);

  Example mislabeled = coarse_example("bad", true);
  mislabeled.gold_labels = {"unexpected"};
  REQUIRE_THROWS_AS(build_coarse_stereotype({{mislabeled}}, {}, "coarse",
                                            SplitRatios{1.0, 0.0, 0.0}, 3),
                    schema_error);
}

TEST_CASE("coarse merge warns when one polarity is missing") {
  std::vector<Example> pos = {coarse_example("p0", true)};
  std::vector<std::string> warnings;
  build_coarse_stereotype({pos}, {}, "coarse", SplitRatios{1.0, 0.0, 0.0}, 3,
                          &warnings);
  REQUIRE(warnings.size() == 1);
  REQUIRE(warnings[0].find("imbalance") != std::string::npos);

  warnings.clear();
  std::vector<Example> neg = {coarse_example("n0", false)};
  build_coarse_stereotype({pos}, neg, "coarse", SplitRatios{1.0, 0.0, 0.0}, 3,
                          &warnings);
  REQUIRE(warnings.empty());

  REQUIRE_THROWS_AS(build_coarse_stereotype({pos}, neg, "coarse",
                                            SplitRatios{0.5, 0.1, 0.1}, 3),
                    config_error);
}

TEST_CASE("synthetic suite generation is deterministic") {
  SyntheticConfig cfg;
  cfg.n_tasks = 3;
  cfg.feature_dim = 16;
  cfg.target_sizes = {30, 10, 10};
  cfg.neighbor_sizes = {40, 0, 0};
  cfg.seed = 9;

  const auto a = make_synthetic_suite(cfg);
  const auto b = make_synthetic_suite(cfg);
  REQUIRE(a.tasks.size() == 3);
  REQUIRE(a.features.size() == b.features.size());
  for (const auto& [id, x] : a.features) {
    const auto& y = b.features.at(id);
    REQUIRE(x == y); // bitwise equality, same draw sequence
  }
  for (std::size_t t = 0; t < a.tasks.size(); ++t) {
    REQUIRE(a.tasks[t].spec.task_id == b.tasks[t].spec.task_id);
    for (std::size_t i = 0; i < a.tasks[t].split.train.size(); ++i)
      REQUIRE(a.tasks[t].split.train[i].gold_labels ==
              b.tasks[t].split.train[i].gold_labels);
  }

  SyntheticConfig other = cfg;
  other.seed = 10;
  const auto c = make_synthetic_suite(other);
  bool any_diff = false;
  for (const auto& [id, x] : a.features)
    if (c.features.at(id) != x) any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("synthetic suite shapes ids labels and corruption markers") {
  SyntheticConfig cfg;
  cfg.n_tasks = 3;
  cfg.feature_dim = 8;
  cfg.noise_fraction = 0.4;
  cfg.target_sizes = {20, 8, 8};
  cfg.neighbor_sizes = {50, 0, 0};
  cfg.seed = 4;

  const auto suite = make_synthetic_suite(cfg);
  REQUIRE(suite.tasks[0].spec.task_id == "target");
  REQUIRE(suite.tasks[0].spec.role == TaskRole::target);
  REQUIRE(suite.tasks[1].spec.task_id == "neighbor1");
  REQUIRE(suite.tasks[2].spec.task_id == "neighbor2");
  REQUIRE(suite.tasks[0].split.train[0].example_id == "target-train-0");
  REQUIRE(suite.tasks[0].split.train.size() == 20);
  REQUIRE(suite.tasks[0].split.validation.size() == 8);
  REQUIRE(suite.tasks[1].split.train.size() == 50);

  const std::set<std::string> allowed{"neg", "pos"};
  for (const auto& task : suite.tasks) {
    for (const auto* part :
         {&task.split.train, &task.split.validation, &task.split.test}) {
      for (const auto& ex : *part) {
        REQUIRE(ex.gold_labels.size() == 1);
        REQUIRE(allowed.count(*ex.gold_labels.begin()) == 1);
        REQUIRE(ex.text == ex.example_id);
        REQUIRE(suite.features.at(ex.example_id).size() == 8);
      }
    }
  }

  // target examples are never corrupted, neighbors match the noise fraction
  for (const auto* part : {&suite.tasks[0].split.train,
                           &suite.tasks[0].split.validation,
                           &suite.tasks[0].split.test})
    for (const auto& ex : *part) REQUIRE(ex.metadata.count("corrupted") == 0);

  for (std::size_t t = 1; t < suite.tasks.size(); ++t) {
    std::size_t corrupted = 0;
    for (const auto& ex : suite.tasks[t].split.train)
      if (ex.metadata.count("corrupted")) {
        REQUIRE(ex.metadata.at("corrupted") == "true");
        ++corrupted;
      }
    REQUIRE(corrupted == 20); // round(0.4 * 50)
  }
}

TEST_CASE("synthetic noise fraction one corrupts every neighbor example") {
  SyntheticConfig cfg;
  cfg.n_tasks = 2;
  cfg.feature_dim = 6;
  cfg.noise_fraction = 1.0;
  cfg.target_sizes = {5, 2, 2};
  cfg.neighbor_sizes = {12, 0, 0};
  const auto suite = make_synthetic_suite(cfg);
  for (const auto& ex : suite.tasks[1].split.train)
    REQUIRE(ex.metadata.at("corrupted") == "true");
}

TEST_CASE("synthetic suite rejects degenerate configurations") {
  SyntheticConfig cfg;
  cfg.target_sizes = {5, 2, 2};
  cfg.neighbor_sizes = {5, 0, 0};

  auto bad = cfg;
  bad.n_tasks = 1;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
  bad = cfg;
  bad.feature_dim = 0;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
  bad = cfg;
  bad.overlap = 1.5;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
  bad = cfg;
  bad.noise_fraction = -0.1;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
  bad = cfg;
  bad.target_sizes.validation = 0;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
  bad = cfg;
  bad.neighbor_sizes.train = -1;
  REQUIRE_THROWS_AS(make_synthetic_suite(bad), config_error);
}
