#include <gtest/gtest.h>

#include <random>

#include "nnfuse/schema.hpp"
#include "support/oracles.hpp"

namespace nnfuse {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kArgument;
}

HarmonizationSpec two_feature_spec() {
  return spec_from_json(nlohmann::json::parse(R"({
    "version": 1,
    "surveys": {"S": {"household_id": "h", "person_id": "p", "day_id": "d"}},
    "target": {"sources": {"S": {"table": "day", "columns": ["n"], "divisor": 1}}},
    "features": [
      {"name": "A", "categories": ["c", "d"],
       "sources": {"S": {"table": "person", "column": "a",
                         "values": {"x": "c", "y": "d", "skip": null}}}},
      {"name": "B", "categories": ["i", "j"],
       "sources": {"S": {"table": "household", "column": "b",
                         "bins": [[null, "i"], [10, "j"]]}}}
    ]})"));
}

TEST(Dictionary, ColumnsFollowSpecOrder) {
  const auto dict = build_dictionary(two_feature_spec());
  EXPECT_EQ(dict.dimension(), 4u);
  EXPECT_EQ(dict.column_names(), (std::vector<std::string>{"A_c", "A_d", "B_i", "B_j"}));
  EXPECT_EQ(dict.groups()[1].offset, 2u);
  EXPECT_EQ(dict.find_group("B"), 1u);
  EXPECT_FALSE(dict.find_group("C"));
}

TEST(Dictionary, ShippedSpecHasTwentySixColumns) {
  const auto spec = load_spec(std::string(NNFUSE_DATA_DIR) + "/harmonization.json");
  const auto dict = build_dictionary(spec);
  EXPECT_EQ(dict.dimension(), 26u);
  EXPECT_EQ(dict.group_count(), 6u);
  std::vector<std::size_t> widths;
  for (const auto& g : dict.groups()) widths.push_back(g.width());
  EXPECT_EQ(widths, testing::harmonized_group_widths());
}

TEST(Dictionary, DuplicatesRejected) {
  EXPECT_EQ(kind_of([] { FeatureDictionary::from_groups({{"A", {"c"}}, {"A", {"d"}}}); }),
            ErrorKind::kSchema);
  EXPECT_EQ(kind_of([] { FeatureDictionary::from_groups({{"A", {"c", "c"}}}); }),
            ErrorKind::kSchema);
}

TEST(Dictionary, HashTracksLayout) {
  const auto a = FeatureDictionary::from_groups({{"A", {"c", "d"}}, {"B", {"i", "j"}}});
  const auto b = FeatureDictionary::from_groups({{"A", {"c", "d"}}, {"B", {"i", "j"}}});
  const auto c = FeatureDictionary::from_groups({{"A", {"d", "c"}}, {"B", {"i", "j"}}});
  const auto d = FeatureDictionary::from_groups({{"A", {"c"}}, {"dB", {"i", "j"}}});
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_NE(a.hash(), d.hash());
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(Encode, ValueMapping) {
  const auto spec = two_feature_spec();
  const auto& a = spec.features[0];
  EXPECT_EQ(encode_value(a, "S", "x").to_string(), "10");
  EXPECT_EQ(encode_value(a, "S", "y").to_string(), "01");
  EXPECT_EQ(encode_value(a, "S", "skip").to_string(), "00");
  EXPECT_EQ(encode_value(a, "S", "").to_string(), "00");
  EXPECT_EQ(encode_value(a, "S", std::nullopt).to_string(), "00");
}

TEST(Encode, BinsAreLowerInclusive) {
  const auto spec = two_feature_spec();
  const auto& b = spec.features[1];
  EXPECT_EQ(encode_value(b, "S", "-3").to_string(), "10");
  EXPECT_EQ(encode_value(b, "S", "9.99").to_string(), "10");
  EXPECT_EQ(encode_value(b, "S", "10").to_string(), "01");
  EXPECT_EQ(encode_value(b, "S", "250").to_string(), "01");
}

TEST(Encode, UnmappedValueNamesSurveyColumnValue) {
  const auto spec = two_feature_spec();
  try {
    encode_value(spec.features[0], "S", "zzz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMapping);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'zzz'"), std::string::npos);
    EXPECT_NE(msg.find("'S'"), std::string::npos);
    EXPECT_NE(msg.find("'a'"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { encode_value(spec.features[1], "S", "many"); }), ErrorKind::kMapping);
  EXPECT_EQ(kind_of([&] { encode_value(spec.features[0], "T", "x"); }), ErrorKind::kMapping);
}

TEST(Encode, ShippedSpecCrosswalks) {
  const auto spec = load_spec(std::string(NNFUSE_DATA_DIR) + "/harmonization.json");
  const auto& income = spec.features[0];
  EXPECT_EQ(encode_value(income, "NHTS", "6").to_string(), "001");
  EXPECT_EQ(encode_value(income, "NHTS", "7").to_string(), "010");
  EXPECT_EQ(encode_value(income, "NHTS", "11").to_string(), "100");
  EXPECT_EQ(encode_value(income, "NHTS", "-9").to_string(), "000");
  EXPECT_EQ(encode_value(income, "PSRC", "$100,000 or more").to_string(), "100");
  const auto& age = spec.features[1];
  EXPECT_EQ(encode_value(age, "NHTS", "24").to_string(), "1000");
  EXPECT_EQ(encode_value(age, "NHTS", "25").to_string(), "0100");
  EXPECT_EQ(encode_value(age, "NHTS", "70").to_string(), "0001");
}

TEST(Encode, DecodeThenReencodeIsIdentity) {
  // Identity mapping: every category label maps to itself.
  const auto dict = testing::dictionary_for_widths(testing::harmonized_group_widths());
  std::vector<FeatureSpec> features;
  for (const auto& g : dict.groups()) {
    FeatureSpec f{g.name, g.categories, {}};
    ColumnMapping m{Level::kPerson, g.name, {}, {}};
    for (const auto& c : g.categories) m.values[c] = c;
    f.per_survey["S"] = m;
    features.push_back(f);
  }
  std::mt19937_64 gen(3);
  for (int t = 0; t < 500; ++t) {
    const auto x = BitVector::from_string(testing::random_one_hot(gen, testing::harmonized_group_widths(), 0.2));
    const auto labels = decode_categories(dict, x);
    std::string re;
    for (std::size_t g = 0; g < features.size(); ++g) {
      const auto part = encode_value(features[g], "S",
                                     labels[g] ? std::optional<std::string_view>(*labels[g])
                                               : std::nullopt);
      EXPECT_LE(part.count(), 1u);
      re += part.to_string();
    }
    EXPECT_EQ(re, x.to_string());
  }
}

TEST(Target, DivisorScaling) {
  EXPECT_DOUBLE_EQ(*harmonize_target(30.0, 30.0), 1.0);
  EXPECT_DOUBLE_EQ(*harmonize_target(3.0, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(*harmonize_target(0.0, 30.0), 0.0);
  EXPECT_FALSE(harmonize_target(std::nullopt, 30.0));
  EXPECT_EQ(kind_of([] { harmonize_target(-1.0, 1.0); }), ErrorKind::kData);
  EXPECT_EQ(kind_of([] { harmonize_target(1.0, 0.0); }), ErrorKind::kSchema);
}

TEST(SpecJson, ValidationErrors) {
  auto base = nlohmann::json::parse(R"({
    "version": 1,
    "surveys": {"S": {"household_id": "h", "person_id": "p", "day_id": "d"}},
    "target": {"sources": {"S": {"table": "day", "columns": ["n"]}}},
    "features": [{"name": "A", "categories": ["c", "d"],
                  "sources": {"S": {"table": "person", "column": "a", "values": {"x": "c"}}}}]})");
  EXPECT_NO_THROW(spec_from_json(base));

  auto j = base;
  j["version"] = 2;
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j.erase("version");
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["features"][0]["categories"] = {"c"};
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["features"][0]["sources"]["S"]["values"]["x"] = "nope";
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["features"][0]["sources"]["S"]["table"] = "day";
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["target"]["sources"]["S"]["divisor"] = 0;
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["features"][0]["sources"]["S"]["bins"] = {{5, "c"}, {1, "d"}};
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
  j = base;
  j["features"][0]["sources"]["S"]["table"] = "attic";
  EXPECT_EQ(kind_of([&] { spec_from_json(j); }), ErrorKind::kSchema);
}

}  // namespace
}  // namespace nnfuse
