#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ekicl/prompting.hpp"

namespace fs = std::filesystem;
using namespace ekicl;

namespace {

const fs::path kSource(EKICL_SOURCE_DIR);

std::map<std::string, PromptSpec> golden_specs() {
  std::map<std::string, PromptSpec> specs;
  specs["zero_shot"].query_text = "the boy is on the stool";

  auto& one = specs["one_demo"];
  one.demos = {{"a boy is reaching into the cookie jar", "Good"}};
  one.query_text = "um the lady is";

  auto& conf = specs["conf_hint"];
  conf.demos = {{"uh he is getting cookies", "Bad"}};
  conf.query_text = "um the lady is";
  conf.conf_hint = 0.87;

  auto& feat = specs["feat_hint"];
  feat.demos = conf.demos;
  feat.query_text = conf.query_text;
  feat.feat_hint = 0.123456;

  PromptSpec custom{{{"the water is overflowing", "AD"}, {"the mother dries a plate", "Non-AD"}},
                    "two kids and a mother",
                    LabelPair("AD", "Non-AD", LabelConfig::Aligned),
                    0.05,
                    2.0};
  specs.emplace("custom_pair", custom);
  return specs;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(BuildPrompt, Goldens) {
  for (const auto& [name, spec] : golden_specs()) {
    EXPECT_EQ(build_prompt(spec), read_file(kSource / "tests/golden" / ("prompt_" + name + ".txt"))) << name;
  }
}

TEST(BuildPrompt, Examples) {
  const auto specs = golden_specs();
  const auto zero = build_prompt(specs.at("zero_shot"));
  EXPECT_EQ(zero.find("Answer: "), std::string::npos);
  EXPECT_EQ(occurrences(zero, "Description: "), 1u);
  EXPECT_EQ(build_prompt(specs.at("conf_hint")), build_prompt(specs.at("conf_hint")));
  const auto conf = build_prompt(specs.at("conf_hint"));
  EXPECT_EQ(occurrences(conf, "\nReference screening probability of impairment: 0.87\n"), 1u);
  auto bad = specs.at("zero_shot");
  bad.template_id = "other";
  EXPECT_THROW(build_prompt(bad), Error);
}

TEST(BuildPrompt, InjectiveOnFields) {
  const PromptSpec base{{{"demo text", "Bad"}}, "query text", LabelPair::standard(), 0.5, 0.25};
  std::vector<PromptSpec> variants(9, base);
  variants[1].demos[0].text = "demo text2";
  variants[2].demos[0].label = "Good";
  variants[3].query_text = "query";
  variants[4].label_pair = LabelPair("Good", "Bad");
  variants[5].conf_hint.reset();
  variants[6].conf_hint = 0.51;
  variants[7].feat_hint.reset();
  variants[8].demos.push_back({"more", "Good"});
  std::set<std::string> rendered;
  for (const auto& v : variants) rendered.insert(build_prompt(v));
  EXPECT_EQ(rendered.size(), variants.size());
}

TEST(ParseCompletion, Examples) {
  const auto pair = LabelPair::standard();
  EXPECT_EQ(parse_completion("Bad.", pair), Vote::AD);
  EXPECT_EQ(parse_completion("I cannot determine this.", pair), Vote::Abstain);
  EXPECT_EQ(parse_completion("Good, not bad overall", pair), Vote::HC);
  EXPECT_EQ(parse_completion("  GOOD", pair), Vote::HC);
  EXPECT_EQ(parse_completion("Badly", pair), Vote::Abstain);
  EXPECT_EQ(parse_completion("", pair), Vote::Abstain);
  const LabelPair ad("AD", "Non-AD");
  EXPECT_EQ(parse_completion("Non-AD", ad), Vote::HC);
  EXPECT_EQ(parse_completion("AD", ad), Vote::AD);
  EXPECT_EQ(parse_completion("not AD; Non-AD", ad), Vote::AD);
}

TEST(LabelPair, Invariants) {
  EXPECT_THROW(LabelPair("Bad", "bad"), Error);
  EXPECT_THROW(LabelPair("", "Good"), Error);
  EXPECT_THROW(LabelPair("very bad", "Good"), Error);
  const auto s = LabelPair::standard();
  EXPECT_EQ(s.word_for(Label::AD), "Bad");
  EXPECT_EQ(s.word_for(Label::HC), "Good");
  EXPECT_EQ(s.name(), "Bad/Good");
}

TEST(LabelSweep, BundledFile) {
  const auto pairs = label_sweep_pairs(kSource / "data/label_pairs.csv");
  ASSERT_EQ(pairs.size(), 30u);
  std::map<LabelConfig, int> per_class;
  std::set<std::string> names;
  for (const auto& p : pairs) {
    ++per_class[p.config()];
    names.insert(p.name());
  }
  EXPECT_EQ(per_class.size(), 3u);
  for (auto want : {"Bad/Good", "AD/Non-AD", "Alzheimer/Control", "Bad/Healthy", "Bad/Control"}) {
    EXPECT_TRUE(names.count(want)) << want;
  }
  for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_LE(pairs[i - 1].config(), pairs[i].config());
  for (const auto& p : pairs) {
    EXPECT_EQ(parse_completion(p.ad_word(), p), Vote::AD) << p.name();
    EXPECT_EQ(parse_completion(p.hc_word() + ".", p), Vote::HC) << p.name();
  }
}

TEST(LabelSweep, ParseErrors) {
  EXPECT_TRUE(parse_label_pairs("").empty());
  EXPECT_TRUE(parse_label_pairs("config_class,ad_word,hc_word\n# nothing\n").empty());
  EXPECT_THROW(parse_label_pairs("Aligned,Bad,Bad\n"), Error);
  EXPECT_THROW(parse_label_pairs("Aligned,Bad,Good\nFixedBad,bad,good\n"), Error);
  EXPECT_THROW(parse_label_pairs("Weird,Bad,Good\n"), Error);
  EXPECT_THROW(parse_label_pairs("Aligned,Bad\n"), Error);
  const auto grouped = parse_label_pairs("FixedBad,Bad,Fine\nAligned,Sick,Well\nFixedBad,Bad,Okay\n");
  ASSERT_EQ(grouped.size(), 3u);
  EXPECT_EQ(grouped[0].name(), "Sick/Well");
  EXPECT_EQ(grouped[1].name(), "Bad/Fine");
  EXPECT_EQ(grouped[2].name(), "Bad/Okay");
}
