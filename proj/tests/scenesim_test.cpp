#include "evoia/scenesim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "evoia/rng.hpp"

using evoia::GeneratorConfig;
using evoia::LaneState;
using evoia::LatentScene;
using evoia::LightState;
using evoia::ObstacleType;
using evoia::Rng;
using evoia::SceneSample;
using evoia::TurnDirection;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

LatentScene benign_scene() {
    LatentScene s;
    s.light = LightState::none;
    s.front_obstacle = ObstacleType::none;
    s.stop_sign = false;
    s.lead_vehicle = false;
    s.left_state = LaneState::clear;
    s.right_state = LaneState::clear;
    s.front_car_turning = TurnDirection::none;
    s.illumination = 0.8;
    s.n_distractors = 0;
    return s;
}

TEST(LabelOracle, RedLightStops) {
    LatentScene s = benign_scene();
    s.light = LightState::red;
    const auto labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.actions[evoia::kActStop], 1);
    EXPECT_EQ(labels.actions[evoia::kActForward], 0);
    EXPECT_EQ(labels.explanations[evoia::kExpRedTrafficLight], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpGreenLight], 0);
    // red light also blocks the turns that a clear lane would otherwise allow
    EXPECT_EQ(labels.actions[evoia::kActTurnLeft], 0);
    EXPECT_EQ(labels.actions[evoia::kActTurnRight], 0);
}

TEST(LabelOracle, PedestrianStops) {
    LatentScene s = benign_scene();
    s.front_obstacle = ObstacleType::pedestrian;
    const auto labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.actions[evoia::kActStop], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpObstacles], 1);
}

TEST(LabelOracle, SolidLeftLaneBlocksLeft) {
    LatentScene s = benign_scene();
    s.light = LightState::green;
    s.left_state = LaneState::solid_line;
    const auto labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.actions[evoia::kActTurnLeft], 0);
    EXPECT_EQ(labels.explanations[evoia::kExpSolidLaneOnLeft], 1);
    EXPECT_EQ(labels.actions[evoia::kActForward], 1);
}

TEST(LabelOracle, TurnRulesAndTrafficAllows) {
    LatentScene s = benign_scene();
    s.light = LightState::green;
    s.left_state = LaneState::open_turn_lane;
    const auto labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.actions[evoia::kActTurnLeft], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpOnLeftTurnLane], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpLeftTrafficAllows], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpGreenLight], 1);

    // a front car turning left enables the turn even under a red light
    LatentScene r = benign_scene();
    r.light = LightState::red;
    r.front_car_turning = TurnDirection::left;
    const auto rl = evoia::label_oracle(r);
    EXPECT_EQ(rl.actions[evoia::kActTurnLeft], 1);
    EXPECT_EQ(rl.explanations[evoia::kExpFrontCarTurnLeft], 1);
    EXPECT_EQ(rl.explanations[evoia::kExpLeftTrafficAllows], 0);  // not green
}

TEST(LabelOracle, StopForwardMutualExclusion) {
    // property: over random scenes, Stop and Forward never agree
    GeneratorConfig cfg;
    Rng rng(99, 0);
    for (int i = 0; i < 2000; ++i) {
        const LatentScene s = evoia::sample_scene(rng, cfg);
        const auto labels = evoia::label_oracle(s);
        EXPECT_NE(labels.actions[evoia::kActStop], labels.actions[evoia::kActForward]);
        // reserved bits stay clear
        for (int b = 18; b < evoia::kNumExplanations; ++b) EXPECT_EQ(labels.explanations[b], 0);
    }
}

TEST(LabelOracle, FollowTrafficVsRoadClear) {
    LatentScene s = benign_scene();
    s.lead_vehicle = true;
    auto labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.explanations[evoia::kExpFollowTraffic], 1);
    EXPECT_EQ(labels.explanations[evoia::kExpRoadClear], 0);
    s.lead_vehicle = false;
    labels = evoia::label_oracle(s);
    EXPECT_EQ(labels.explanations[evoia::kExpFollowTraffic], 0);
    EXPECT_EQ(labels.explanations[evoia::kExpRoadClear], 1);
}

TEST(SampleScene, DegeneratePrior) {
    GeneratorConfig cfg;
    cfg.p_light_none = 0.0;
    cfg.p_light_green = 0.0;
    cfg.p_light_red = 1.0;
    Rng rng(7, 0);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(evoia::sample_scene(rng, cfg).light, LightState::red);
}

TEST(SampleScene, InvalidPriorRejected) {
    GeneratorConfig cfg;
    cfg.p_light_none = 0.5;
    cfg.p_light_green = 0.4;
    cfg.p_light_red = 0.4;
    Rng rng(7, 0);
    EXPECT_THROW(evoia::sample_scene(rng, cfg), std::invalid_argument);
    cfg.p_light_none = -0.1;
    cfg.p_light_green = 0.7;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(SampleScene, DeterministicGivenSeedAndStream) {
    GeneratorConfig cfg;
    Rng a(42, 0), b(42, 0);
    for (int i = 0; i < 20; ++i) {
        const LatentScene sa = evoia::sample_scene(a, cfg);
        const LatentScene sb = evoia::sample_scene(b, cfg);
        EXPECT_EQ(sa.light, sb.light);
        EXPECT_EQ(sa.front_obstacle, sb.front_obstacle);
        EXPECT_EQ(sa.left_state, sb.left_state);
        EXPECT_EQ(sa.illumination, sb.illumination);
        EXPECT_EQ(sa.n_distractors, sb.n_distractors);
    }
}

TEST(SampleScene, PriorFrequencies) {
    GeneratorConfig cfg;
    Rng rng(2024, 0);
    int red = 0, ped = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const LatentScene s = evoia::sample_scene(rng, cfg);
        red += s.light == LightState::red;
        ped += s.front_obstacle == ObstacleType::pedestrian;
        EXPECT_GE(s.illumination, cfg.illumination_min);
        EXPECT_LE(s.illumination, cfg.illumination_max);
        EXPECT_GE(s.n_distractors, 0);
        EXPECT_LE(s.n_distractors, cfg.max_distractors);
    }
    EXPECT_NEAR(red / static_cast<double>(n), cfg.p_light_red, 0.02);
    EXPECT_NEAR(ped / static_cast<double>(n), cfg.p_obstacle_pedestrian, 0.02);
}

TEST(RenderFeatures, RedLightOnlySceneHasOneCausalRegion) {
    LatentScene s = benign_scene();
    s.light = LightState::red;
    GeneratorConfig cfg;
    Rng rng(5, 0);
    const SceneSample sample = evoia::render_features(s, rng, cfg);
    ASSERT_EQ(sample.regions.size(), 1u);
    EXPECT_EQ(sample.causal_regions.at("stop"), 0);
    EXPECT_EQ(sample.causal_regions.at("red_traffic_light"), 0);
    EXPECT_EQ(sample.global_features.size(), 2u * cfg.region_feature_dim);
    EXPECT_DOUBLE_EQ(sample.global_features[cfg.region_feature_dim], s.illumination);
}

TEST(RenderFeatures, DeterministicAndJitterFree) {
    GeneratorConfig cfg;
    LatentScene s = benign_scene();
    s.light = LightState::green;
    s.front_obstacle = ObstacleType::car;
    s.lead_vehicle = true;
    s.n_distractors = 2;

    Rng a(13, 8), b(13, 8);
    const SceneSample sa = evoia::render_features(s, a, cfg);
    const SceneSample sb = evoia::render_features(s, b, cfg);
    EXPECT_EQ(sa.regions, sb.regions);
    EXPECT_EQ(sa.global_features, sb.global_features);
    EXPECT_EQ(sa.causal_regions, sb.causal_regions);

    // with jitter disabled, two renders differ only by region order
    GeneratorConfig quiet = cfg;
    quiet.jitter_sigma = 0.0;
    LatentScene plain = s;
    plain.n_distractors = 0;  // distractor attributes stay random either way
    Rng c(13, 1), d(13, 2);
    SceneSample sc = evoia::render_features(plain, c, quiet);
    SceneSample sd = evoia::render_features(plain, d, quiet);
    auto sorted = [](SceneSample x) {
        std::sort(x.regions.begin(), x.regions.end());
        return x.regions;
    };
    EXPECT_EQ(sorted(sc), sorted(sd));
}

TEST(RenderFeatures, CausalIndicesValidOverRandomScenes) {
    GeneratorConfig cfg;
    Rng scene_rng(77, 0);
    for (int i = 0; i < 500; ++i) {
        const LatentScene scene = evoia::sample_scene(scene_rng, cfg);
        Rng render_rng(77, 1000 + i);
        const SceneSample sample = evoia::render_features(scene, render_rng, cfg);
        ASSERT_GE(sample.regions.size(), 1u);
        const auto labels = evoia::label_oracle(scene);
        EXPECT_EQ(sample.actions, labels.actions);
        EXPECT_EQ(sample.explanations, labels.explanations);
        for (const auto& [name, idx] : sample.causal_regions) {
            EXPECT_GE(idx, 0) << name;
            EXPECT_LT(idx, static_cast<int>(sample.regions.size())) << name;
        }
        // a stop always has a recorded cause
        if (labels.actions[evoia::kActStop] == 1) {
            EXPECT_TRUE(sample.causal_regions.count("stop"));
        }
    }
}

TEST(Perturb, IdentityMagnitudes) {
    GeneratorConfig cfg;
    LatentScene s = benign_scene();
    s.light = LightState::green;
    Rng rng(3, 0);
    const SceneSample sample = evoia::render_features(s, rng, cfg);

    evoia::PerturbationSpec spec;
    spec.family = evoia::PerturbFamily::brightness;
    spec.brightness = 0.0;
    EXPECT_EQ(evoia::perturb(sample, spec).regions, sample.regions);

    spec.family = evoia::PerturbFamily::contrast;
    spec.contrast = 1.0;
    EXPECT_EQ(evoia::perturb(sample, spec).regions, sample.regions);
}

TEST(Perturb, LabelInvarianceAcrossFamilies) {
    GeneratorConfig cfg;
    Rng scene_rng(55, 0);
    const evoia::FeatureStats stats = [&] {
        std::vector<SceneSample> pool;
        for (int i = 0; i < 50; ++i) {
            Rng rr(55, 2000 + i);
            pool.push_back(evoia::render_features(evoia::sample_scene(scene_rng, cfg), rr, cfg));
        }
        return evoia::compute_feature_stats(pool);
    }();

    Rng rng(56, 0);
    for (int i = 0; i < 100; ++i) {
        Rng rr(56, 3000 + i);
        const SceneSample sample =
            evoia::render_features(evoia::sample_scene(scene_rng, cfg), rr, cfg);
        for (auto family : {evoia::PerturbFamily::brightness, evoia::PerturbFamily::contrast,
                            evoia::PerturbFamily::channel_scale, evoia::PerturbFamily::noise,
                            evoia::PerturbFamily::normalize}) {
            const auto spec = evoia::random_perturbation(family, rng, cfg.region_feature_dim,
                                                         1234, static_cast<std::uint64_t>(i), &stats);
            const SceneSample out = evoia::perturb(sample, spec);
            EXPECT_EQ(out.actions, sample.actions);
            EXPECT_EQ(out.explanations, sample.explanations);
            EXPECT_EQ(out.causal_regions, sample.causal_regions);
            EXPECT_EQ(out.regions.size(), sample.regions.size());
        }
    }
}

TEST(Perturb, NoiseIsReproducible) {
    GeneratorConfig cfg;
    LatentScene s = benign_scene();
    s.light = LightState::red;
    Rng rng(3, 0);
    const SceneSample sample = evoia::render_features(s, rng, cfg);

    evoia::PerturbationSpec spec;
    spec.family = evoia::PerturbFamily::noise;
    spec.noise_sigma = 0.05;
    spec.seed = 11;
    spec.stream = 4;
    const SceneSample a = evoia::perturb(sample, spec);
    const SceneSample b = evoia::perturb(sample, spec);
    EXPECT_EQ(a.regions, b.regions);
    EXPECT_NE(a.regions, sample.regions);
    EXPECT_EQ(a.actions, sample.actions);
}

TEST(Corrupt, SeverityEndpoints) {
    GeneratorConfig cfg;
    LatentScene s = benign_scene();
    s.light = LightState::green;
    s.n_distractors = 3;
    Rng rng(8, 0);
    const SceneSample sample = evoia::render_features(s, rng, cfg);

    Rng c0(9, 0);
    const SceneSample same = evoia::corrupt(sample, 0.0, c0);
    EXPECT_EQ(same.regions, sample.regions);
    EXPECT_FALSE(same.corrupted);

    Rng c1(9, 1);
    const SceneSample wrecked = evoia::corrupt(sample, 1.0, c1);
    EXPECT_TRUE(wrecked.corrupted);
    EXPECT_EQ(wrecked.actions, sample.actions);
    for (std::size_t i = 0; i < sample.regions.size(); ++i)
        EXPECT_NE(wrecked.regions[i], sample.regions[i]);  // every region replaced
}

TEST(DatasetIo, RoundTripExact) {
    GeneratorConfig cfg;
    cfg.n_train = 60;
    cfg.n_val = 20;
    cfg.n_test = 20;
    const auto samples = evoia::generate_dataset(cfg);
    ASSERT_EQ(samples.size(), 100u);

    const std::string path = temp_path("evoia_roundtrip.jsonl");
    evoia::write_dataset(samples, path);
    const auto back = evoia::read_dataset(path);
    ASSERT_EQ(back.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(back[i].id, samples[i].id);
        EXPECT_EQ(back[i].split, samples[i].split);
        EXPECT_EQ(back[i].regions, samples[i].regions);
        EXPECT_EQ(back[i].global_features, samples[i].global_features);
        EXPECT_EQ(back[i].actions, samples[i].actions);
        EXPECT_EQ(back[i].explanations, samples[i].explanations);
        EXPECT_EQ(back[i].causal_regions, samples[i].causal_regions);
        EXPECT_EQ(back[i].corrupted, samples[i].corrupted);
    }
    std::remove(path.c_str());
}

TEST(DatasetIo, ByteIdenticalRegeneration) {
    GeneratorConfig cfg;
    cfg.n_train = 40;
    cfg.n_val = 10;
    cfg.n_test = 10;
    const std::string p1 = temp_path("evoia_gen_a.jsonl");
    const std::string p2 = temp_path("evoia_gen_b.jsonl");
    evoia::write_dataset(evoia::generate_dataset(cfg), p1);
    evoia::write_dataset(evoia::generate_dataset(cfg), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(c1, c2);
    EXPECT_FALSE(c1.empty());
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST(DatasetIo, SplitSizesFollowConfig) {
    GeneratorConfig cfg;
    cfg.n_train = 30;
    cfg.n_val = 12;
    cfg.n_test = 8;
    const auto samples = evoia::generate_dataset(cfg);
    EXPECT_EQ(evoia::filter_split(samples, "train").size(), 30u);
    EXPECT_EQ(evoia::filter_split(samples, "val").size(), 12u);
    EXPECT_EQ(evoia::filter_split(samples, "test").size(), 8u);
}

TEST(DatasetIo, TruncatedLineNamesLineNumber) {
    GeneratorConfig cfg;
    cfg.n_train = 3;
    cfg.n_val = 0;
    cfg.n_test = 0;
    const auto samples = evoia::generate_dataset(cfg);
    const std::string path = temp_path("evoia_truncated.jsonl");
    evoia::write_dataset(samples, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        all = all.substr(0, all.size() - 40);  // chop the final record
        std::ofstream out(path, std::ios::binary);
        out << all;
    }
    try {
        evoia::read_dataset(path);
        FAIL() << "expected parse failure";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    std::remove(path.c_str());
}

TEST(DatasetIo, WrongDimensionRejected) {
    GeneratorConfig cfg;
    cfg.n_train = 2;
    cfg.n_val = 0;
    cfg.n_test = 0;
    auto samples = evoia::generate_dataset(cfg);
    samples[1].global_features.pop_back();  // break the 2x invariant
    const std::string path = temp_path("evoia_baddim.jsonl");
    evoia::write_dataset(samples, path);
    try {
        evoia::read_dataset(path);
        FAIL() << "expected dimension diagnostic";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("dimension"), std::string::npos) << e.what();
    }
    std::remove(path.c_str());
}

TEST(GeneratorConfigFile, ParsingAndUnknownKeys) {
    const std::string path = temp_path("evoia_gen.cfg");
    {
        std::ofstream out(path);
        out << "# generator settings\n"
            << "seed = 11\n"
            << "n_train = 25\n"
            << "n_val = 5\n"
            << "n_test = 5\n"
            << "p_light_none = 0.2\n"
            << "p_light_green = 0.5\n"
            << "p_light_red = 0.3\n";
    }
    const GeneratorConfig cfg = GeneratorConfig::from_file(path);
    EXPECT_EQ(cfg.seed, 11u);
    EXPECT_EQ(cfg.n_train, 25);
    EXPECT_DOUBLE_EQ(cfg.p_light_green, 0.5);
    {
        std::ofstream out(path);
        out << "not_a_real_key = 3\n";
    }
    EXPECT_THROW(GeneratorConfig::from_file(path), std::runtime_error);
    std::remove(path.c_str());
}

}  // namespace
