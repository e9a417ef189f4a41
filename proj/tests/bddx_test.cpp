#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "introdrive/bddx.hpp"
#include "introdrive/hash.hpp"

using namespace introdrive;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::vector<AnnotatedClip> sample_clips() {
  std::vector<AnnotatedClip> clips;
  AnnotatedClip a;
  a.video_id = "video_a";
  a.intervals.push_back({0.0, 4.5, "The car stops", "because the light is red"});
  a.intervals.push_back({5.0, 9.25, "The car accelerates", "because the light turned green"});
  AnnotatedClip b;
  b.video_id = "video_b";
  b.intervals.push_back({1.5, 12.0, "The car slows down", "because there is a car in front"});
  clips = {a, b};
  return clips;
}
}  // namespace

TEST(Annotations, ParseWellFormedFixture) {
  const std::string path = tmp_path("introdrive_ann1.jsonl");
  {
    std::ofstream out(path);
    out << R"({"video_id":"v1","start_s":0.0,"end_s":3.5,"description":"The car stops","justification":"because the light is red"})"
        << "\n";
    out << R"({"video_id":"v2","start_s":1.0,"end_s":2.0,"description":"The car turns","justification":"because the road curves"})"
        << "\n";
  }
  auto clips = parse_annotations(path);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].video_id, "v1");
  EXPECT_EQ(clips[0].intervals[0].description, "The car stops");
  fs::remove(path);
}

TEST(Annotations, RejectsDegenerateIntervalWithLineNumber) {
  const std::string path = tmp_path("introdrive_ann2.jsonl");
  {
    std::ofstream out(path);
    out << R"({"video_id":"v1","start_s":0.0,"end_s":3.5,"description":"a b","justification":"c d"})"
        << "\n";
    out << R"({"video_id":"v1","start_s":4.0,"end_s":4.0,"description":"a b","justification":"c d"})"
        << "\n";
  }
  try {
    parse_annotations(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  fs::remove(path);
}

TEST(Annotations, RejectsMissingFieldWithLineNumber) {
  const std::string path = tmp_path("introdrive_ann3.jsonl");
  {
    std::ofstream out(path);
    out << R"({"video_id":"v1","start_s":0.0,"end_s":1.0,"description":"a b"})" << "\n";
  }
  try {
    parse_annotations(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("justification"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Annotations, RejectsMalformedJson) {
  const std::string path = tmp_path("introdrive_ann4.jsonl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "{\"video_id\": \"v1\", \xff\xfe}\n";
  }
  EXPECT_THROW(parse_annotations(path), ParseError);
  fs::remove(path);
}

TEST(Annotations, WriteParseRoundTripIsIdentity) {
  auto clips = sample_clips();
  const std::string path = tmp_path("introdrive_ann5.jsonl");
  write_annotations(path, clips);
  auto back = parse_annotations(path);
  EXPECT_EQ(back, clips);
  // serializing the parse result reproduces the file byte for byte
  const std::string path2 = tmp_path("introdrive_ann6.jsonl");
  write_annotations(path2, back);
  EXPECT_EQ(sha256_file_hex(path), sha256_file_hex(path2));
  fs::remove(path);
  fs::remove(path2);
}

TEST(Annotations, RandomizedRoundTripProperty) {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> uni(0.0, 100.0);
  const std::vector<std::string> words = {"car", "light", "red", "green", "stops",
                                          "turns", "lane", "slows", "sign", "road"};
  std::vector<AnnotatedClip> clips;
  for (int c = 0; c < 8; ++c) {
    AnnotatedClip clip;
    clip.video_id = "v" + std::to_string(c);
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      AnnotatedInterval iv;
      iv.start_s = uni(rng);
      iv.end_s = iv.start_s + 0.5 + uni(rng) / 10;
      for (int k = 0; k < 3; ++k)
        iv.description += (k ? " " : "") + words[rng() % words.size()];
      for (int k = 0; k < 4; ++k)
        iv.justification += (k ? " " : "") + words[rng() % words.size()];
      clip.intervals.push_back(iv);
    }
    clips.push_back(clip);
  }
  const std::string path = tmp_path("introdrive_ann7.jsonl");
  write_annotations(path, clips);
  EXPECT_EQ(parse_annotations(path), clips);
  fs::remove(path);
}

TEST(Vocabulary, RepeatedSentenceKeepsUniqueTokensPlusReserved) {
  std::vector<AnnotatedClip> clips;
  AnnotatedClip c;
  c.video_id = "v";
  for (int i = 0; i < 3; ++i)
    c.intervals.push_back({i * 2.0, i * 2.0 + 1.0, "the car stops", "the car stops"});
  clips.push_back(c);
  auto vocab = build_vocab(clips, 2).joint;
  EXPECT_EQ(vocab.size(), 5 + 3);  // reserved + {the, car, stops}
  EXPECT_TRUE(vocab.contains("car"));
  EXPECT_EQ(vocab.token(Vocabulary::kSep), "<sep>");
}

TEST(Vocabulary, RareTokenMapsToUnk) {
  std::vector<std::string> corpus = {"the car stops", "the car turns", "a zebra appears"};
  auto vocab = Vocabulary::build(corpus, 2);
  EXPECT_FALSE(vocab.contains("zebra"));
  EXPECT_EQ(vocab.id("zebra"), Vocabulary::kUnk);
  EXPECT_NE(vocab.id("the"), Vocabulary::kUnk);
}

TEST(Vocabulary, TwentySentenceFixtureMatchesHandTally) {
  // "car" 20x, "the" 20x, "stops" 12x, "turns" 8x, "red" 6x, "slow" 1x
  std::vector<std::string> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back("the car stops" + std::string(i < 6 ? " red" : ""));
  for (int i = 0; i < 8; ++i) corpus.push_back("the car turns");
  corpus.back() += " slow";
  auto vocab = Vocabulary::build(corpus, 2);
  // frequency then lexicographic: car/the (20) tie -> car first, then stops, turns, red
  EXPECT_EQ(vocab.token(5), "car");
  EXPECT_EQ(vocab.token(6), "the");
  EXPECT_EQ(vocab.token(7), "stops");
  EXPECT_EQ(vocab.token(8), "turns");
  EXPECT_EQ(vocab.token(9), "red");
  EXPECT_EQ(vocab.size(), 10);
  EXPECT_EQ(vocab.id("slow"), Vocabulary::kUnk);
}

TEST(Vocabulary, IdsStableAcrossRebuildAndSaveLoad) {
  std::vector<std::string> corpus = {"the car stops", "the car stops", "a light turns green",
                                     "a light turns red", "red light ahead", "green light ahead"};
  auto v1 = Vocabulary::build(corpus, 2);
  auto v2 = Vocabulary::build(corpus, 2);
  ASSERT_EQ(v1.size(), v2.size());
  for (int i = 0; i < v1.size(); ++i) EXPECT_EQ(v1.token(i), v2.token(i));

  const std::string path = tmp_path("introdrive_vocab.txt");
  v1.save(path);
  auto v3 = Vocabulary::load(path);
  ASSERT_EQ(v3.size(), v1.size());
  for (int i = 0; i < v1.size(); ++i) EXPECT_EQ(v3.token(i), v1.token(i));
  fs::remove(path);
}

TEST(Tokenizer, LowercasesAndStripsPunctuation) {
  auto t = tokenize("The car, stops; because it's RED!");
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[0], "the");
  EXPECT_EQ(t[4], "its");
  EXPECT_EQ(t[5], "red");
}

TEST(Stemmer, CollapsesWordFamilies) {
  EXPECT_EQ(stem("slows"), "slow");
  EXPECT_EQ(stem("slowing"), "slow");
  EXPECT_EQ(stem("slowed"), "slow");
  EXPECT_EQ(stem("slowly"), "slow");
  EXPECT_EQ(stem("stopping"), "stop");
  EXPECT_EQ(stem("stopped"), "stop");
  EXPECT_EQ(stem("stops"), "stop");
  EXPECT_EQ(stem("is"), "is");        // too short to strip
  EXPECT_EQ(stem("pass"), "pass");    // -ss guard
  EXPECT_EQ(stem("turning"), "turn");
}

TEST(Stats, EmptyDatasetIsZeroed) {
  auto rep = stats({});
  EXPECT_EQ(rep.n_clips, 0);
  EXPECT_EQ(rep.n_intervals, 0);
  EXPECT_DOUBLE_EQ(rep.total_interval_seconds, 0.0);
  EXPECT_TRUE(rep.top_description_stems.empty());
}

TEST(Stats, StemmedCountsAndHistogram) {
  std::vector<AnnotatedClip> clips;
  AnnotatedClip a;
  a.video_id = "a";
  a.intervals.push_back({0, 1, "the car slows", "traffic ahead"});
  a.intervals.push_back({2, 3, "the car is slowing", "heavy traffic"});
  AnnotatedClip b;
  b.video_id = "b";
  b.intervals.push_back({0, 2, "the car slowed", "traffic jam"});
  clips = {a, b};
  auto rep = stats(clips);
  EXPECT_EQ(rep.n_clips, 2);
  EXPECT_EQ(rep.n_intervals, 3);
  EXPECT_EQ(rep.intervals_per_video_histogram.at(2), 1);
  EXPECT_EQ(rep.intervals_per_video_histogram.at(1), 1);
  bool found = false;
  for (const auto& [word, count] : rep.top_description_stems)
    if (word == "slow") {
      EXPECT_EQ(count, 3);
      found = true;
    }
  EXPECT_TRUE(found) << "expected the slows/slowing/slowed family under one stem";
}

TEST(Stats, AdditiveUnderConcatenation) {
  auto clips = sample_clips();
  auto r_all = stats(clips);
  auto r_a = stats({clips[0]});
  auto r_b = stats({clips[1]});
  EXPECT_EQ(r_all.n_intervals, r_a.n_intervals + r_b.n_intervals);
  EXPECT_NEAR(r_all.total_interval_seconds,
              r_a.total_interval_seconds + r_b.total_interval_seconds, 1e-12);
}

TEST(Split, DisjointAndComplete) {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("clip" + std::to_string(i));
  auto split = make_split(ids, 7);
  EXPECT_EQ(split.train.size(), 80u);
  EXPECT_EQ(split.val.size(), 10u);
  EXPECT_EQ(split.test.size(), 10u);
  std::set<std::string> all;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << "duplicate " << id;
  EXPECT_EQ(all.size(), ids.size());
  // deterministic under the same seed, shuffled differently under another
  auto again = make_split(ids, 7);
  EXPECT_EQ(split.train, again.train);
  auto other = make_split(ids, 8);
  EXPECT_NE(split.train, other.train);
}
