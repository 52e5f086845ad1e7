#include <gtest/gtest.h>

#include "csisniff/params.hpp"

using namespace csisniff;

TEST(AnalysisParams, DefaultsWhenEmpty)
{
  const auto c = analysis_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.params.lambda, 3.0);
  EXPECT_EQ(c.params.w1, 5.0);
  EXPECT_EQ(c.params.w2, 3.0);
  EXPECT_EQ(c.params.history, FilterHistory::raw);
  EXPECT_EQ(c.params.subcarriers, default_subcarrier_set(20));
  EXPECT_FALSE(c.explicit_subcarriers);
  EXPECT_EQ(c.evaluation().overlap_frac, 0.5);
}

TEST(AnalysisParams, OverridesApply)
{
  const auto c = analysis_config_from_json(nlohmann::json::parse(
      R"({"lambda": 2.5, "w1": 4, "w2": 1.5, "overlap_frac": 0.1, "history": "filtered",
          "bandwidth": 40, "subcarriers": [-2, -1, 1, 2], "exclude_invalid": true})"));
  EXPECT_EQ(c.params.lambda, 2.5);
  EXPECT_EQ(c.params.history, FilterHistory::filtered);
  EXPECT_EQ(c.params.subcarriers.indices(), (std::vector<int>{-2, -1, 1, 2}));
  EXPECT_EQ(c.params.subcarriers.fft_size(), 128u);
  EXPECT_TRUE(c.explicit_subcarriers);
  EXPECT_EQ(c.evaluation().overlap_frac, 0.1);
  EXPECT_TRUE(c.evaluation().exclude_invalid);
}

TEST(AnalysisParams, Rejections)
{
  auto bad = [](const char* text) { return analysis_config_from_json(nlohmann::json::parse(text)); };
  EXPECT_THROW(bad(R"({"lamda": 3})"), ConfigError);
  EXPECT_THROW(bad(R"({"history": "median"})"), ConfigError);
  EXPECT_THROW(bad(R"({"w2": 0})"), ConfigError);
  EXPECT_THROW(bad(R"({"bandwidth": 30})"), ValidationError);
  EXPECT_THROW(bad(R"({"subcarriers": [0]})"), ValidationError);
  EXPECT_THROW(bad(R"({"w1": "five"})"), ConfigError);
  EXPECT_THROW(bad("[]"), ConfigError);
}

TEST(AnalysisParams, ShippedFilesLoad)
{
  EXPECT_EQ(load_analysis_config(CSISNIFF_SOURCE_DIR "/scenarios/uc2-params.json").params.overlap_frac, 0.1);
  EXPECT_EQ(load_analysis_config(CSISNIFF_SOURCE_DIR "/scenarios/uc1-params.json").params.overlap_frac, 0.5);
}
