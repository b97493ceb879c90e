#pragma once
// Synthetic driving scenes: latent factors -> region/global feature vectors,
// with a deterministic label oracle for the 4-action / 21-explanation schema
// and the feature-space perturbation families used for augmentation.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoia/keyvalue.hpp"
#include "evoia/rng.hpp"

namespace evoia {

// ---------------------------------------------------------------------------
// latent scene factors

enum class LightState { none, green, red };
enum class ObstacleType { none, pedestrian, car, rider };
enum class LaneState { open_turn_lane, clear, no_lane, solid_line, obstacle };
enum class TurnDirection { none, left, right };

struct LatentScene {
    LightState light = LightState::none;
    ObstacleType front_obstacle = ObstacleType::none;
    bool stop_sign = false;
    bool lead_vehicle = false;
    LaneState left_state = LaneState::clear;
    LaneState right_state = LaneState::clear;
    TurnDirection front_car_turning = TurnDirection::none;
    double illumination = 1.0;  // [0.2, 1.0]
    int n_distractors = 0;      // [0, 6]
};

// ---------------------------------------------------------------------------
// label schema

constexpr int kNumActions = 4;
constexpr int kNumExplanations = 21;
constexpr int kNumHeads = kNumActions + kNumExplanations;

// action order: Forward, Stop, Turn Left, Turn Right
enum ActionIndex { kActForward = 0, kActStop = 1, kActTurnLeft = 2, kActTurnRight = 3 };

enum ExplanationIndex {
    kExpFollowTraffic = 0,
    kExpRoadClear = 1,
    kExpGreenLight = 2,
    kExpObstacles = 3,
    kExpRedTrafficLight = 4,
    kExpTrafficSign = 5,
    kExpFrontCarTurnLeft = 6,
    kExpOnLeftTurnLane = 7,
    kExpLeftTrafficAllows = 8,
    kExpObstaclesOnLeft = 9,
    kExpNoLaneOnLeft = 10,
    kExpSolidLaneOnLeft = 11,
    kExpFrontCarTurnRight = 12,
    kExpOnRightTurnLane = 13,
    kExpRightTrafficAllows = 14,
    kExpObstaclesOnRight = 15,
    kExpNoLaneOnRight = 16,
    kExpSolidLaneOnRight = 17,
    // bits 18-20 are schema placeholders, always 0
};

inline const std::array<std::string, kNumActions>& action_names() {
    static const std::array<std::string, kNumActions> names = {"forward", "stop", "turn_left",
                                                               "turn_right"};
    return names;
}

inline const std::array<std::string, kNumExplanations>& explanation_names() {
    static const std::array<std::string, kNumExplanations> names = {
        "follow_traffic",      "road_clear",          "green_light",
        "obstacles",           "red_traffic_light",   "traffic_sign",
        "front_car_turn_left", "on_left_turn_lane",   "left_traffic_allows",
        "obstacles_on_left",   "no_lane_on_left",     "solid_lane_on_left",
        "front_car_turn_right","on_right_turn_lane",  "right_traffic_allows",
        "obstacles_on_right",  "no_lane_on_right",    "solid_lane_on_right",
        "reserved_18",         "reserved_19",         "reserved_20"};
    return names;
}

// name of head h, where heads 0-3 are actions and 4-24 explanations
inline std::string head_name(int h) {
    if (h < 0 || h >= kNumHeads) throw std::out_of_range("head_name: bad index");
    return h < kNumActions ? action_names()[h] : explanation_names()[h - kNumActions];
}

struct SceneLabels {
    std::array<int, kNumActions> actions{};
    std::array<int, kNumExplanations> explanations{};
};

// Deterministic rule table mapping latents to the label schema. Stop and
// Forward are mutually exclusive by construction.
inline SceneLabels label_oracle(const LatentScene& s) {
    SceneLabels out{};
    const bool red = s.light == LightState::red;
    const bool green = s.light == LightState::green;
    const bool obstacle = s.front_obstacle != ObstacleType::none;
    const bool stop = red || obstacle || s.stop_sign;

    const bool left_open = s.left_state == LaneState::open_turn_lane || s.left_state == LaneState::clear;
    const bool right_open = s.right_state == LaneState::open_turn_lane || s.right_state == LaneState::clear;
    const bool left = (left_open && !red) || (s.front_car_turning == TurnDirection::left && left_open);
    const bool right = (right_open && !red) || (s.front_car_turning == TurnDirection::right && right_open);

    out.actions[kActForward] = stop ? 0 : 1;
    out.actions[kActStop] = stop ? 1 : 0;
    out.actions[kActTurnLeft] = left ? 1 : 0;
    out.actions[kActTurnRight] = right ? 1 : 0;

    auto& e = out.explanations;
    e[kExpFollowTraffic] = (!stop && s.lead_vehicle) ? 1 : 0;
    e[kExpRoadClear] = (!stop && !s.lead_vehicle) ? 1 : 0;
    e[kExpGreenLight] = green ? 1 : 0;
    e[kExpObstacles] = obstacle ? 1 : 0;
    e[kExpRedTrafficLight] = red ? 1 : 0;
    e[kExpTrafficSign] = s.stop_sign ? 1 : 0;
    e[kExpFrontCarTurnLeft] = s.front_car_turning == TurnDirection::left ? 1 : 0;
    e[kExpOnLeftTurnLane] = s.left_state == LaneState::open_turn_lane ? 1 : 0;
    e[kExpLeftTrafficAllows] = (left && green) ? 1 : 0;
    e[kExpObstaclesOnLeft] = s.left_state == LaneState::obstacle ? 1 : 0;
    e[kExpNoLaneOnLeft] = s.left_state == LaneState::no_lane ? 1 : 0;
    e[kExpSolidLaneOnLeft] = s.left_state == LaneState::solid_line ? 1 : 0;
    e[kExpFrontCarTurnRight] = s.front_car_turning == TurnDirection::right ? 1 : 0;
    e[kExpOnRightTurnLane] = s.right_state == LaneState::open_turn_lane ? 1 : 0;
    e[kExpRightTrafficAllows] = (right && green) ? 1 : 0;
    e[kExpObstaclesOnRight] = s.right_state == LaneState::obstacle ? 1 : 0;
    e[kExpNoLaneOnRight] = s.right_state == LaneState::no_lane ? 1 : 0;
    e[kExpSolidLaneOnRight] = s.right_state == LaneState::solid_line ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// rendered sample

struct SceneSample {
    std::int64_t id = 0;
    std::vector<std::vector<double>> regions;        // each region_feature_dim wide
    std::vector<double> global_features;             // 2 x region_feature_dim wide
    std::array<int, kNumActions> actions{};
    std::array<int, kNumExplanations> explanations{};
    std::map<std::string, int> causal_regions;       // label-bit name -> region index
    std::string split = "train";
    bool corrupted = false;

    int region_dim() const { return regions.empty() ? 0 : static_cast<int>(regions[0].size()); }
};

// ---------------------------------------------------------------------------
// generator configuration

struct GeneratorConfig {
    std::uint64_t seed = 7;
    int region_feature_dim = 16;
    double jitter_sigma = 0.05;
    int n_train = 4000;
    int n_val = 560;
    int n_test = 1120;

    // category priors
    double p_light_none = 0.50, p_light_green = 0.30, p_light_red = 0.20;
    double p_obstacle_none = 0.75, p_obstacle_pedestrian = 0.08, p_obstacle_car = 0.12,
           p_obstacle_rider = 0.05;
    double p_stop_sign = 0.08;
    double p_lead_vehicle = 0.40;
    // shared between left_state and right_state
    double p_lane_open = 0.15, p_lane_clear = 0.35, p_lane_no_lane = 0.20, p_lane_solid = 0.20,
           p_lane_obstacle = 0.10;
    double p_turn_none = 0.80, p_turn_left = 0.10, p_turn_right = 0.10;

    double illumination_min = 0.2, illumination_max = 1.0;
    int max_distractors = 6;

    void validate() const {
        auto check_group = [](std::initializer_list<double> ps, const char* what) {
            double total = 0.0;
            for (double p : ps) {
                if (p < 0.0) throw std::invalid_argument(std::string("GeneratorConfig: negative prior in ") + what);
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw std::invalid_argument(std::string("GeneratorConfig: priors for ") + what +
                                            " must sum to 1, got " + std::to_string(total));
        };
        check_group({p_light_none, p_light_green, p_light_red}, "light");
        check_group({p_obstacle_none, p_obstacle_pedestrian, p_obstacle_car, p_obstacle_rider},
                    "front_obstacle");
        check_group({p_lane_open, p_lane_clear, p_lane_no_lane, p_lane_solid, p_lane_obstacle},
                    "lane_state");
        check_group({p_turn_none, p_turn_left, p_turn_right}, "front_car_turning");
        if (p_stop_sign < 0.0 || p_stop_sign > 1.0 || p_lead_vehicle < 0.0 || p_lead_vehicle > 1.0)
            throw std::invalid_argument("GeneratorConfig: flag priors must lie in [0,1]");
        if (region_feature_dim < 13)
            throw std::invalid_argument("GeneratorConfig: region_feature_dim must be >= 13");
        if (n_train < 0 || n_val < 0 || n_test < 0)
            throw std::invalid_argument("GeneratorConfig: negative split size");
        if (!(illumination_min <= illumination_max) || illumination_min < 0.0)
            throw std::invalid_argument("GeneratorConfig: bad illumination range");
        if (max_distractors < 0 || jitter_sigma < 0.0)
            throw std::invalid_argument("GeneratorConfig: bad jitter/distractor setting");
    }

    static GeneratorConfig from_file(const std::string& path) {
        KeyValueReader kv(parse_key_value_file(path));
        GeneratorConfig c = from_reader(kv);
        auto leftovers = kv.unused();
        if (!leftovers.empty())
            throw std::runtime_error(path + ": unknown generator key '" + leftovers.begin()->first + "'");
        return c;
    }

    static GeneratorConfig from_reader(KeyValueReader& kv) {
        GeneratorConfig c;
        c.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<long>(c.seed)));
        c.region_feature_dim = kv.get("region_feature_dim", c.region_feature_dim);
        c.jitter_sigma = kv.get("jitter_sigma", c.jitter_sigma);
        c.n_train = kv.get("n_train", c.n_train);
        c.n_val = kv.get("n_val", c.n_val);
        c.n_test = kv.get("n_test", c.n_test);
        c.p_light_none = kv.get("p_light_none", c.p_light_none);
        c.p_light_green = kv.get("p_light_green", c.p_light_green);
        c.p_light_red = kv.get("p_light_red", c.p_light_red);
        c.p_obstacle_none = kv.get("p_obstacle_none", c.p_obstacle_none);
        c.p_obstacle_pedestrian = kv.get("p_obstacle_pedestrian", c.p_obstacle_pedestrian);
        c.p_obstacle_car = kv.get("p_obstacle_car", c.p_obstacle_car);
        c.p_obstacle_rider = kv.get("p_obstacle_rider", c.p_obstacle_rider);
        c.p_stop_sign = kv.get("p_stop_sign", c.p_stop_sign);
        c.p_lead_vehicle = kv.get("p_lead_vehicle", c.p_lead_vehicle);
        c.p_lane_open = kv.get("p_lane_open", c.p_lane_open);
        c.p_lane_clear = kv.get("p_lane_clear", c.p_lane_clear);
        c.p_lane_no_lane = kv.get("p_lane_no_lane", c.p_lane_no_lane);
        c.p_lane_solid = kv.get("p_lane_solid", c.p_lane_solid);
        c.p_lane_obstacle = kv.get("p_lane_obstacle", c.p_lane_obstacle);
        c.p_turn_none = kv.get("p_turn_none", c.p_turn_none);
        c.p_turn_left = kv.get("p_turn_left", c.p_turn_left);
        c.p_turn_right = kv.get("p_turn_right", c.p_turn_right);
        c.illumination_min = kv.get("illumination_min", c.illumination_min);
        c.illumination_max = kv.get("illumination_max", c.illumination_max);
        c.max_distractors = kv.get("max_distractors", c.max_distractors);
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// scene sampling

namespace detail {
inline int categorical(Rng& rng, std::initializer_list<double> probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    int i = 0;
    for (double p : probs) {
        acc += p;
        if (u < acc) return i;
        ++i;
    }
    return static_cast<int>(probs.size()) - 1;  // u landed in rounding slack
}
}  // namespace detail

inline LatentScene sample_scene(Rng& rng, const GeneratorConfig& cfg) {
    cfg.validate();
    LatentScene s;
    s.light = static_cast<LightState>(
        detail::categorical(rng, {cfg.p_light_none, cfg.p_light_green, cfg.p_light_red}));
    s.front_obstacle = static_cast<ObstacleType>(detail::categorical(
        rng, {cfg.p_obstacle_none, cfg.p_obstacle_pedestrian, cfg.p_obstacle_car, cfg.p_obstacle_rider}));
    s.stop_sign = rng.uniform() < cfg.p_stop_sign;
    s.lead_vehicle = rng.uniform() < cfg.p_lead_vehicle;
    s.left_state = static_cast<LaneState>(detail::categorical(
        rng, {cfg.p_lane_open, cfg.p_lane_clear, cfg.p_lane_no_lane, cfg.p_lane_solid, cfg.p_lane_obstacle}));
    s.right_state = static_cast<LaneState>(detail::categorical(
        rng, {cfg.p_lane_open, cfg.p_lane_clear, cfg.p_lane_no_lane, cfg.p_lane_solid, cfg.p_lane_obstacle}));
    s.front_car_turning = static_cast<TurnDirection>(
        detail::categorical(rng, {cfg.p_turn_none, cfg.p_turn_left, cfg.p_turn_right}));
    s.illumination = rng.uniform(cfg.illumination_min, cfg.illumination_max);
    s.n_distractors = rng.uniform_int(0, cfg.max_distractors);
    return s;
}

// ---------------------------------------------------------------------------
// feature rendering

// region feature layout: [ type one-hot (8) | attribute code (5) | jitter (rest) ],
// everything scaled by scene illumination
constexpr int kTypeDims = 8;
constexpr int kAttrDims = 5;

enum EntityType {
    kEntityLight = 0,
    kEntityObstacle = 1,
    kEntitySign = 2,
    kEntityLead = 3,
    kEntityLeftMarker = 4,
    kEntityRightMarker = 5,
    kEntityTurningCar = 6,
    kEntityDistractor = 7,
};

inline SceneSample render_features(const LatentScene& scene, Rng& rng, const GeneratorConfig& cfg) {
    cfg.validate();
    const int dim = cfg.region_feature_dim;

    SceneSample out;
    const SceneLabels labels = label_oracle(scene);
    out.actions = labels.actions;
    out.explanations = labels.explanations;

    auto make_region = [&](int type, std::initializer_list<std::pair<int, double>> attrs) {
        std::vector<double> r(dim, 0.0);
        r[type] = 1.0;
        for (auto [slot, value] : attrs) r[kTypeDims + slot] = value;
        for (int j = kTypeDims + kAttrDims; j < dim; ++j) r[j] = rng.normal(0.0, cfg.jitter_sigma);
        for (double& v : r) v *= scene.illumination;
        return r;
    };

    // entity regions in canonical order; indices remapped after the shuffle
    std::vector<std::vector<double>> regions;
    int idx_light = -1, idx_obstacle = -1, idx_sign = -1, idx_lead = -1;
    int idx_left = -1, idx_right = -1, idx_turn = -1;

    if (scene.light != LightState::none) {
        idx_light = static_cast<int>(regions.size());
        regions.push_back(make_region(kEntityLight, {{scene.light == LightState::green ? 0 : 1, 1.0}}));
    }
    if (scene.front_obstacle != ObstacleType::none) {
        idx_obstacle = static_cast<int>(regions.size());
        regions.push_back(
            make_region(kEntityObstacle, {{static_cast<int>(scene.front_obstacle) - 1, 1.0}}));
    }
    if (scene.stop_sign) {
        idx_sign = static_cast<int>(regions.size());
        regions.push_back(make_region(kEntitySign, {{0, 1.0}}));
    }
    if (scene.lead_vehicle) {
        idx_lead = static_cast<int>(regions.size());
        regions.push_back(make_region(kEntityLead, {{0, 1.0}}));
    }
    auto marker_attr_slot = [](LaneState st) {
        switch (st) {
            case LaneState::open_turn_lane: return 0;
            case LaneState::no_lane: return 1;
            case LaneState::solid_line: return 2;
            case LaneState::obstacle: return 3;
            default: return -1;  // clear: no marker region
        }
    };
    if (int slot = marker_attr_slot(scene.left_state); slot >= 0) {
        idx_left = static_cast<int>(regions.size());
        regions.push_back(make_region(kEntityLeftMarker, {{slot, 1.0}}));
    }
    if (int slot = marker_attr_slot(scene.right_state); slot >= 0) {
        idx_right = static_cast<int>(regions.size());
        regions.push_back(make_region(kEntityRightMarker, {{slot, 1.0}}));
    }
    if (scene.front_car_turning != TurnDirection::none) {
        idx_turn = static_cast<int>(regions.size());
        regions.push_back(make_region(
            kEntityTurningCar, {{scene.front_car_turning == TurnDirection::left ? 0 : 1, 1.0}}));
    }

    const int n_entities = static_cast<int>(regions.size());
    int n_distractors = scene.n_distractors;
    if (n_entities == 0 && n_distractors == 0) n_distractors = 1;  // keep >= 1 region
    for (int d = 0; d < n_distractors; ++d) {
        std::vector<double> r(dim, 0.0);
        r[kEntityDistractor] = 1.0;
        for (int j = 0; j < kAttrDims; ++j) r[kTypeDims + j] = rng.uniform();
        for (int j = kTypeDims + kAttrDims; j < dim; ++j) r[j] = rng.normal(0.0, cfg.jitter_sigma);
        for (double& v : r) v *= scene.illumination;
        regions.push_back(std::move(r));
    }

    // shuffle region order, tracking where each canonical index lands
    std::vector<int> order(regions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    std::vector<int> position(regions.size());
    out.regions.resize(regions.size());
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
        position[order[slot]] = static_cast<int>(slot);
        out.regions[slot] = std::move(regions[order[slot]]);
    }
    auto placed = [&](int canonical) { return canonical < 0 ? -1 : position[canonical]; };
    idx_light = placed(idx_light);
    idx_obstacle = placed(idx_obstacle);
    idx_sign = placed(idx_sign);
    idx_lead = placed(idx_lead);
    idx_left = placed(idx_left);
    idx_right = placed(idx_right);
    idx_turn = placed(idx_turn);

    // causal map: positive bits with an identifiable source region.
    // Bits that are true by absence (forward, road_clear, turns enabled by a
    // clear lane) have no region to point at and are omitted.
    auto record_action = [&](int action, int region) {
        if (out.actions[action] == 1 && region >= 0) out.causal_regions[action_names()[action]] = region;
    };
    auto record_expl = [&](int bit, int region) {
        if (out.explanations[bit] == 1 && region >= 0)
            out.causal_regions[explanation_names()[bit]] = region;
    };
    const int stop_cause = scene.light == LightState::red ? idx_light
                           : idx_obstacle >= 0            ? idx_obstacle
                                                          : idx_sign;
    record_action(kActStop, stop_cause);
    record_action(kActTurnLeft, scene.left_state == LaneState::open_turn_lane ? idx_left : idx_turn);
    record_action(kActTurnRight,
                  scene.right_state == LaneState::open_turn_lane ? idx_right : idx_turn);
    record_expl(kExpFollowTraffic, idx_lead);
    record_expl(kExpGreenLight, idx_light);
    record_expl(kExpObstacles, idx_obstacle);
    record_expl(kExpRedTrafficLight, idx_light);
    record_expl(kExpTrafficSign, idx_sign);
    record_expl(kExpFrontCarTurnLeft, idx_turn);
    record_expl(kExpOnLeftTurnLane, idx_left);
    record_expl(kExpLeftTrafficAllows, idx_light);
    record_expl(kExpObstaclesOnLeft, idx_left);
    record_expl(kExpNoLaneOnLeft, idx_left);
    record_expl(kExpSolidLaneOnLeft, idx_left);
    record_expl(kExpFrontCarTurnRight, idx_turn);
    record_expl(kExpOnRightTurnLane, idx_right);
    record_expl(kExpRightTrafficAllows, idx_light);
    record_expl(kExpObstaclesOnRight, idx_right);
    record_expl(kExpNoLaneOnRight, idx_right);
    record_expl(kExpSolidLaneOnRight, idx_right);

    // global feature: [ mean of regions | illumination | count features | zero pad ]
    out.global_features.assign(2 * dim, 0.0);
    for (const auto& r : out.regions)
        for (int j = 0; j < dim; ++j) out.global_features[j] += r[j];
    for (int j = 0; j < dim; ++j) out.global_features[j] /= static_cast<double>(out.regions.size());
    out.global_features[dim] = scene.illumination;
    out.global_features[dim + 1] = static_cast<double>(out.regions.size()) / 8.0;
    out.global_features[dim + 2] = static_cast<double>(n_entities) / 8.0;
    out.global_features[dim + 3] = static_cast<double>(n_distractors) / 8.0;
    return out;
}

// ---------------------------------------------------------------------------
// perturbation families (feature-space analogs of image augmentations)

enum class PerturbFamily { brightness, contrast, channel_scale, noise, normalize };

inline const char* family_name(PerturbFamily f) {
    switch (f) {
        case PerturbFamily::brightness: return "brightness";
        case PerturbFamily::contrast: return "contrast";
        case PerturbFamily::channel_scale: return "channel_scale";
        case PerturbFamily::noise: return "noise";
        case PerturbFamily::normalize: return "normalize";
    }
    return "?";
}

constexpr double kBrightnessMin = -0.2, kBrightnessMax = 0.2;
constexpr double kContrastMin = 0.8, kContrastMax = 1.25;
constexpr double kChannelScaleMin = 0.9, kChannelScaleMax = 1.1;
constexpr double kNoiseSigmaMax = 0.05;

// per-dimension statistics of a training split, for the normalize family
struct FeatureStats {
    std::vector<double> region_mean, region_std;  // region_dim wide
    std::vector<double> global_mean, global_std;  // 2 x region_dim wide
};

inline FeatureStats compute_feature_stats(const std::vector<SceneSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("compute_feature_stats: no samples");
    const int dim = samples[0].region_dim();
    const int gdim = static_cast<int>(samples[0].global_features.size());
    FeatureStats st;
    st.region_mean.assign(dim, 0.0);
    st.region_std.assign(dim, 0.0);
    st.global_mean.assign(gdim, 0.0);
    st.global_std.assign(gdim, 0.0);
    long n_regions = 0;
    for (const auto& s : samples) {
        for (const auto& r : s.regions) {
            ++n_regions;
            for (int j = 0; j < dim; ++j) st.region_mean[j] += r[j];
        }
        for (int j = 0; j < gdim; ++j) st.global_mean[j] += s.global_features[j];
    }
    for (int j = 0; j < dim; ++j) st.region_mean[j] /= static_cast<double>(n_regions);
    for (int j = 0; j < gdim; ++j) st.global_mean[j] /= static_cast<double>(samples.size());
    for (const auto& s : samples) {
        for (const auto& r : s.regions)
            for (int j = 0; j < dim; ++j) {
                const double d = r[j] - st.region_mean[j];
                st.region_std[j] += d * d;
            }
        for (int j = 0; j < gdim; ++j) {
            const double d = s.global_features[j] - st.global_mean[j];
            st.global_std[j] += d * d;
        }
    }
    for (int j = 0; j < dim; ++j) st.region_std[j] = std::sqrt(st.region_std[j] / n_regions);
    for (int j = 0; j < gdim; ++j)
        st.global_std[j] = std::sqrt(st.global_std[j] / static_cast<double>(samples.size()));
    return st;
}

struct PerturbationSpec {
    PerturbFamily family = PerturbFamily::brightness;
    double brightness = 0.0;             // additive shift
    double contrast = 1.0;               // spread factor around the vector mean
    std::vector<double> channel_scales;  // 2*dim entries; regions use the first dim
    double noise_sigma = kNoiseSigmaMax;
    std::uint64_t seed = 0;              // noise stream
    std::uint64_t stream = 0;
    FeatureStats stats;                  // normalize only
};

// Draws a spec with magnitudes uniform over the family's configured range.
inline PerturbationSpec random_perturbation(PerturbFamily family, Rng& rng, int region_dim,
                                            std::uint64_t noise_seed, std::uint64_t noise_stream,
                                            const FeatureStats* stats = nullptr) {
    PerturbationSpec spec;
    spec.family = family;
    spec.seed = noise_seed;
    spec.stream = noise_stream;
    switch (family) {
        case PerturbFamily::brightness:
            spec.brightness = rng.uniform(kBrightnessMin, kBrightnessMax);
            break;
        case PerturbFamily::contrast:
            spec.contrast = rng.uniform(kContrastMin, kContrastMax);
            break;
        case PerturbFamily::channel_scale:
            spec.channel_scales.resize(2 * region_dim);
            for (double& v : spec.channel_scales) v = rng.uniform(kChannelScaleMin, kChannelScaleMax);
            break;
        case PerturbFamily::noise:
            spec.noise_sigma = kNoiseSigmaMax;
            break;
        case PerturbFamily::normalize:
            if (stats == nullptr)
                throw std::invalid_argument("random_perturbation: normalize needs feature stats");
            spec.stats = *stats;
            break;
    }
    return spec;
}

namespace detail {
inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline void apply_zscore(std::vector<double>& x, const std::vector<double>& mean,
                         const std::vector<double>& std) {
    if (x.size() != mean.size() || x.size() != std.size())
        throw std::invalid_argument("perturb: normalize stats dimension mismatch");
    for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] -= mean[j];
        if (std[j] > 1e-12) x[j] /= std[j];
    }
}
}  // namespace detail

// Applies one perturbation family to every feature vector of the sample.
// Labels and causal annotations are never touched.
inline SceneSample perturb(const SceneSample& sample, const PerturbationSpec& spec) {
    if (sample.regions.empty()) throw std::invalid_argument("perturb: sample has no regions");
    SceneSample out = sample;
    const int dim = sample.region_dim();
    auto each_vector = [&](auto&& fn) {
        for (auto& r : out.regions) fn(r, true);
        fn(out.global_features, false);
    };
    switch (spec.family) {
        case PerturbFamily::brightness: {
            const double beta = detail::clamp(spec.brightness, kBrightnessMin, kBrightnessMax);
            if (beta == 0.0) break;
            each_vector([&](std::vector<double>& x, bool) {
                for (double& v : x) v += beta;
            });
            break;
        }
        case PerturbFamily::contrast: {
            const double gamma = detail::clamp(spec.contrast, kContrastMin, kContrastMax);
            if (gamma == 1.0) break;
            each_vector([&](std::vector<double>& x, bool) {
                double mean = 0.0;
                for (double v : x) mean += v;
                mean /= static_cast<double>(x.size());
                for (double& v : x) v = mean + gamma * (v - mean);
            });
            break;
        }
        case PerturbFamily::channel_scale: {
            if (static_cast<int>(spec.channel_scales.size()) < 2 * dim)
                throw std::invalid_argument("perturb: channel_scales must cover 2 x region_dim");
            each_vector([&](std::vector<double>& x, bool is_region) {
                (void)is_region;
                for (std::size_t j = 0; j < x.size(); ++j)
                    x[j] *= detail::clamp(spec.channel_scales[j], kChannelScaleMin, kChannelScaleMax);
            });
            break;
        }
        case PerturbFamily::noise: {
            const double sigma = detail::clamp(spec.noise_sigma, 0.0, kNoiseSigmaMax);
            Rng rng(spec.seed, spec.stream);
            each_vector([&](std::vector<double>& x, bool) {
                for (double& v : x) v += rng.normal(0.0, sigma);
            });
            break;
        }
        case PerturbFamily::normalize: {
            for (auto& r : out.regions)
                detail::apply_zscore(r, spec.stats.region_mean, spec.stats.region_std);
            detail::apply_zscore(out.global_features, spec.stats.global_mean, spec.stats.global_std);
            break;
        }
        default:
            throw std::invalid_argument("perturb: unknown family");
    }
    return out;
}

// Out-of-distribution probe: replaces regions with unit Gaussian noise at the
// given rate and darkens everything. Labels are kept for scoring; the sample
// is tagged corrupted.
inline SceneSample corrupt(const SceneSample& sample, double severity, Rng& rng) {
    if (severity < 0.0 || severity > 1.0) throw std::invalid_argument("corrupt: severity in [0,1]");
    SceneSample out = sample;
    if (severity == 0.0) return out;
    const double darken = 1.0 - 0.5 * severity;
    for (auto& r : out.regions) {
        if (rng.uniform() < severity)
            for (double& v : r) v = rng.normal(0.0, 1.0);
        for (double& v : r) v *= darken;
    }
    for (double& v : out.global_features) v *= darken;
    out.corrupted = true;
    return out;
}

// ---------------------------------------------------------------------------
// dataset serialization: one JSON record per line

inline void write_dataset(const std::vector<SceneSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    for (const auto& s : samples) {
        nlohmann::json j;
        j["id"] = s.id;
        j["split"] = s.split;
        j["corrupted"] = s.corrupted;
        j["actions"] = s.actions;
        j["explanations"] = s.explanations;
        j["causal_regions"] = s.causal_regions;
        j["regions"] = s.regions;
        j["global"] = s.global_features;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write_dataset: write failed for " + path);
}

inline std::vector<SceneSample> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
    std::vector<SceneSample> samples;
    std::string line;
    int lineno = 0;
    int expected_dim = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = path + " line " + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(where + ": malformed record: " + e.what());
        }
        try {
            SceneSample s;
            s.id = j.at("id").get<std::int64_t>();
            s.split = j.at("split").get<std::string>();
            s.corrupted = j.at("corrupted").get<bool>();
            auto actions = j.at("actions").get<std::vector<int>>();
            auto explanations = j.at("explanations").get<std::vector<int>>();
            if (actions.size() != kNumActions || explanations.size() != kNumExplanations)
                throw std::runtime_error("label vectors must be 4 and 21 wide");
            std::copy(actions.begin(), actions.end(), s.actions.begin());
            std::copy(explanations.begin(), explanations.end(), s.explanations.begin());
            s.causal_regions = j.at("causal_regions").get<std::map<std::string, int>>();
            s.regions = j.at("regions").get<std::vector<std::vector<double>>>();
            s.global_features = j.at("global").get<std::vector<double>>();
            if (s.regions.empty()) throw std::runtime_error("sample has no regions");
            const int dim = static_cast<int>(s.regions[0].size());
            for (const auto& r : s.regions)
                if (static_cast<int>(r.size()) != dim)
                    throw std::runtime_error("ragged region dimensions");
            if (expected_dim < 0) expected_dim = dim;
            if (dim != expected_dim)
                throw std::runtime_error("region dimension " + std::to_string(dim) +
                                         " differs from first record's " + std::to_string(expected_dim));
            if (static_cast<int>(s.global_features.size()) != 2 * dim)
                throw std::runtime_error("global feature dimension must be 2 x region dimension (" +
                                         std::to_string(2 * dim) + "), got " +
                                         std::to_string(s.global_features.size()));
            for (const auto& [name, idx] : s.causal_regions)
                if (idx < 0 || idx >= static_cast<int>(s.regions.size()))
                    throw std::runtime_error("causal region index out of range for bit " + name);
            samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(where + ": missing or mistyped field: " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// dataset generation

// stream kinds for per-sample deterministic substreams
constexpr std::uint64_t kStreamScene = 101;
constexpr std::uint64_t kStreamRender = 102;

inline std::vector<SceneSample> generate_dataset(const GeneratorConfig& cfg) {
    cfg.validate();
    std::vector<SceneSample> samples;
    const long total = static_cast<long>(cfg.n_train) + cfg.n_val + cfg.n_test;
    samples.reserve(total);
    for (long id = 0; id < total; ++id) {
        Rng scene_rng(cfg.seed, substream(kStreamScene, static_cast<std::uint64_t>(id)));
        Rng render_rng(cfg.seed, substream(kStreamRender, static_cast<std::uint64_t>(id)));
        const LatentScene scene = sample_scene(scene_rng, cfg);
        SceneSample s = render_features(scene, render_rng, cfg);
        s.id = id;
        s.split = id < cfg.n_train                ? "train"
                  : id < cfg.n_train + cfg.n_val  ? "val"
                                                  : "test";
        samples.push_back(std::move(s));
    }
    return samples;
}

inline std::vector<SceneSample> filter_split(const std::vector<SceneSample>& samples,
                                             const std::string& split) {
    std::vector<SceneSample> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(s);
    return out;
}

}  // namespace evoia
