#include <gtest/gtest.h>

#include "slim/config.hpp"
#include "slim/error.hpp"
#include "test_support.hpp"

using namespace slim;
using namespace slim::config;
using model::Stage;

TEST(Config, ParsesEntriesCommentsAndBlankLines) {
  const auto e = parse_entries("# Table 6\nBatch size = 8\n\n  Starting LR=0.002  # inline\n");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].key, "Batch size");
  EXPECT_EQ(e[0].value, "8");
  EXPECT_EQ(e[0].line, 2u);
  EXPECT_EQ(e[1].key, "Starting LR");
  EXPECT_EQ(e[1].value, "0.002");
  EXPECT_EQ(e[1].line, 4u);
}

TEST(Config, MalformedLineIsParseError) {
  EXPECT_THROW(parse_entries("Batch size 8\n"), ParseError);
  EXPECT_THROW(parse_entries(" = 8\n"), ParseError);
}

TEST(Config, TableNamesApplyPerStage) {
  const auto c1 = train_config(Stage::stage1, parse_entries("Batch size = 32\n"
                                                            "Early-stop patience = 5 epochs\n"
                                                            "lambda = 0.01\n"
                                                            "Loss mode = literal\n"
                                                            "FC dropout = 0.2\n"
                                                            "Compression output dim = 128\n"));
  EXPECT_EQ(c1.batch_size, 32u);
  EXPECT_EQ(c1.patience, 5u);
  EXPECT_EQ(c1.lambda, 0.01);
  EXPECT_EQ(c1.loss_mode, loss::LossMode::literal);
  EXPECT_EQ(c1.model.projection_dropout, 0.2);
  EXPECT_EQ(c1.model.dependency_dim, 128u);

  const auto c2 = train_config(Stage::stage2, parse_entries("FC dropout = 0.3\nVariant = subspace\n"
                                                            "Augment = true\n"));
  EXPECT_EQ(c2.model.head_dropout, 0.3);
  EXPECT_EQ(c2.model.variant, model::Variant::subspace);
  EXPECT_TRUE(c2.augment);
  EXPECT_EQ(c2.batch_size, 2u);
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    train_config(Stage::stage1, parse_entries("Epochs = 3\nWarmup = 2\n"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("Warmup"), std::string::npos) << msg;
  }
  // Stage-2 keys are not valid at stage 1 and vice versa.
  EXPECT_THROW(train_config(Stage::stage1, parse_entries("Variant = full\n")), ConfigError);
  EXPECT_THROW(train_config(Stage::stage2, parse_entries("lambda = 0.1\n")), ConfigError);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(train_config(Stage::stage1, parse_entries("Batch size = eight\n")), ConfigError);
  EXPECT_THROW(train_config(Stage::stage1, parse_entries("Batch size = -3\n")), ConfigError);
  EXPECT_THROW(train_config(Stage::stage1, parse_entries("Starting LR = 0.00001\n")),
               ValidationError);
  EXPECT_THROW(train_config(Stage::stage2, parse_entries("Augment = maybe\n")), ConfigError);
  EXPECT_THROW(synth_config(parse_entries("Mismatch = 1.5\n")), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  for (auto stage : {Stage::stage1, Stage::stage2}) {
    auto cfg = train::TrainConfig::defaults(stage);
    cfg.lr_start = 0.0123456789012345;
    cfg.seed = 77;
    const std::string text = format(cfg);
    const auto back = train_config(stage, parse_entries(text));
    EXPECT_EQ(format(back), text);
    EXPECT_EQ(back.lr_start, cfg.lr_start);
    EXPECT_EQ(back.seed, 77u);
    for (const auto& key : train_keys(stage)) EXPECT_NE(text.find(key + " = "), std::string::npos);
  }
  synth::SynthConfig s;
  s.mismatch = 0.25;
  s.dataset = "bench";
  const auto sb = synth_config(parse_entries(format(s)));
  EXPECT_EQ(sb.mismatch, 0.25);
  EXPECT_EQ(sb.dataset, "bench");
  EXPECT_EQ(format(sb), format(s));
}

TEST(Config, OverridesAndFiles) {
  const auto e = parse_override("Epochs=4");
  EXPECT_EQ(e.key, "Epochs");
  EXPECT_EQ(e.value, "4");
  EXPECT_THROW(parse_override("Epochs"), ParseError);
  support::TempDir dir;
  support::write_text(dir / "s1.cfg", "Epochs = 7\n");
  EXPECT_EQ(train_config(Stage::stage1, read_entries(dir / "s1.cfg")).epochs, 7u);
  EXPECT_THROW(read_entries(dir / "missing.cfg"), IoError);
}
