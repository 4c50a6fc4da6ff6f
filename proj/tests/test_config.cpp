#include <latentbridge/config.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <latentbridge/errors.hpp>

namespace lb = latentbridge;
namespace fs = std::filesystem;

namespace {

std::string field_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const lb::ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

}  // namespace

TEST(Config, DefaultsAreValid) {
    lb::RunConfig c;
    EXPECT_NO_THROW(lb::validate_config(c));
    EXPECT_EQ(c.schedule.t_train, 1000);
    EXPECT_DOUBLE_EQ(c.schedule.beta_start, 1e-4);
    EXPECT_DOUBLE_EQ(c.schedule.beta_end, 0.02);
    EXPECT_EQ(c.world.k, 4);
    EXPECT_EQ(c.world.frames, 8);
    EXPECT_EQ(c.world.height, 16);
    EXPECT_EQ(c.world.width, 16);
    EXPECT_EQ(c.ddim.t_infer, 50);
    EXPECT_DOUBLE_EQ(c.ddim.guidance_scale, 7.5);
    EXPECT_EQ(c.ddim.invert_mode, lb::InvertMode::naive);
    EXPECT_DOUBLE_EQ(c.bridge.alpha, 0.25);
    EXPECT_EQ(c.bridge.strategy, "Sequential");
    EXPECT_EQ(c.seeds.size(), 20u);
}

TEST(Config, JsonRoundTrip) {
    lb::json j = {
        {"schedule", {{"t_train", 500}, {"beta_start", 2e-4}, {"beta_end", 0.015}}},
        {"world",
         {{"k", 2}, {"frames", 4}, {"height", 8}, {"width", 8}, {"sigma", 0.1}, {"seed", 3}}},
        {"ddim",
         {{"t_infer", 25},
          {"guidance_scale", 5.0},
          {"invert_mode", "naive"},
          {"fp_tol", 1e-9},
          {"fp_max_iter", 50}}},
        {"bridge",
         {{"alpha", 0.5},
          {"strategy", "Fuse"},
          {"task", "control"},
          {"idm_guidance", 2.0},
          {"vdm_guidance", 3.0},
          {"seed", 9},
          {"alternate_idm_first", false}}},
        {"ablation",
         {{"alphas", {0.0, 1.0}}, {"strategies", {"Sequential"}}, {"tasks", {"edit"}}}},
        {"seeds", {4, 5}},
        {"out_dir", "results"},
    };
    const auto c = lb::config_from_json(j);
    EXPECT_EQ(c.schedule.t_train, 500);
    EXPECT_EQ(c.world.frames, 4);
    EXPECT_EQ(c.ddim.invert_mode, lb::InvertMode::naive);
    EXPECT_EQ(c.bridge.strategy, "Fuse");
    EXPECT_FALSE(c.bridge.alternate_idm_first);
    EXPECT_EQ(c.ablation.tasks, std::vector<std::string>({"edit"}));
    EXPECT_EQ(c.seeds, std::vector<uint64_t>({4, 5}));
    EXPECT_EQ(c.out_dir, "results");

    // Echo and reparse: identical config.
    const auto echoed = lb::config_from_json(lb::config_to_json(c));
    EXPECT_EQ(lb::config_to_json(echoed), lb::config_to_json(c));
}

TEST(Config, PartialJsonKeepsDefaults) {
    const auto c = lb::config_from_json(lb::json{{"world", {{"k", 2}}}});
    EXPECT_EQ(c.world.k, 2);
    EXPECT_EQ(c.world.frames, 8);     // default preserved
    EXPECT_EQ(c.ddim.t_infer, 50);    // untouched section
}

TEST(Config, UnknownKeysRejectedWithPath) {
    EXPECT_EQ(field_of([] { lb::config_from_json(lb::json{{"wat", 1}}); }), "config.wat");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"schedule", {{"t_tran", 10}}}});
              }),
              "schedule.t_tran");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"bridge", {{"omega", 0.1}}}});
              }),
              "bridge.omega");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"ablation", {{"seeds", {1}}}}});
              }),
              "ablation.seeds");
}

TEST(Config, TypeErrorsNamed) {
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"world", {{"k", "four"}}}});
              }),
              "world.k");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"ddim", {{"fp_tol", "tiny"}}}});
              }),
              "ddim.fp_tol");
    EXPECT_EQ(field_of([] { lb::config_from_json(lb::json{{"seeds", "all"}}); }), "seeds");
}

TEST(Config, RangeViolationsNamed) {
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"bridge", {{"alpha", 1.5}}}});
              }),
              "bridge.alpha");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"world", {{"height", 3}}}});
              }),
              "world.height");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"ddim", {{"t_infer", 2000}}}});
              }),
              "ddim.t_infer");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"ddim", {{"invert_mode", "magic"}}}});
              }),
              "ddim.invert_mode");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"bridge", {{"strategy", "Turbo"}}}});
              }),
              "strategy");
    EXPECT_EQ(field_of([] {
                  lb::config_from_json(lb::json{{"ablation", {{"alphas", {2.0}}}}});
              }),
              "ablation.alphas");
    EXPECT_EQ(field_of([] { lb::config_from_json(lb::json{{"seeds", lb::json::array()}}); }),
              "seeds");
}

TEST(Config, LoadFromFileAndParseErrors) {
    const auto dir = fs::temp_directory_path() / "latentbridge_config_test";
    fs::create_directories(dir);

    const auto good = dir / "good.json";
    std::ofstream(good) << R"({"world": {"k": 3}, "seeds": [1, 2]})";
    const auto c = lb::load_config(good.string());
    EXPECT_EQ(c.world.k, 3);
    EXPECT_EQ(c.seeds.size(), 2u);

    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    EXPECT_EQ(field_of([&] { lb::load_config(bad.string()); }), "config");

    EXPECT_THROW(lb::load_config((dir / "absent.json").string()), lb::IoError);
}
