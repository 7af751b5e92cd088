#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/doctags.hpp"
#include "docpipe/layout_post.hpp"

// Turns post-processed detections into the layout prior block that is
// prepended to the decoder prompt, with optional stress perturbations
// (skipped injection, per-item dropout, order shuffle).

namespace docpipe {

inline constexpr std::string_view kDefaultInstruction = "Convert this page to Docling:";

struct PriorItem {
    LayoutTag tag = LayoutTag::text;
    LocBox box;

    bool operator==(const PriorItem&) const = default;
};

// detector class id -> markup tag emitted in the prior
LayoutTag map_class(int cls);

// pixel box -> 0..500 grid, round half away from zero, clamped
LocBox quantize_box(const BBox& box, double page_width, double page_height);

// Reading order: primary sort by y, then items whose vertical extents
// actually overlap (or share y_min) within a 10-unit band are re-ordered
// left to right.
std::vector<PriorItem> reading_order(std::vector<PriorItem> items);

struct LayoutPrior {
    std::string page_id;
    std::vector<PriorItem> items;
};

LayoutPrior build_prior(const DetectionPage& page, const PostprocessConfig& config);

// "<tag><loc_a><loc_b><loc_c><loc_d></tag>" lines joined by newlines
std::string serialize_prior_items(const std::vector<PriorItem>& items);

// the full block including the <layout> wrapper, one item per line
std::string prior_block(const std::vector<PriorItem>& items);

struct PerturbConfig {
    bool shuffle = false;
    double injection_prob = 1.0; // chance the prior is injected at all
    double dropout = 0.0;        // per-item drop chance once injected

    bool operator==(const PerturbConfig&) const = default;
};

// compact name like "ys-1.0-0.3": shuffle flag, injection prob, dropout
std::string perturb_config_name(const PerturbConfig& config);
PerturbConfig parse_perturb_config(const std::string& name);

struct PerturbResult {
    bool skipped = false;
    std::vector<PriorItem> items;
};

// Consumes randomness in a fixed order (injection gate, one draw per item,
// then the shuffle) so results are reproducible for a given page seed.
PerturbResult apply_perturbations(const std::vector<PriorItem>& items,
                                  const PerturbConfig& config, uint64_t seed);

struct PromptRecord {
    std::string page_id;
    std::string instruction;
    std::string prior;   // serialized block, empty when the prior is skipped
    int token_overhead = 0;
    std::optional<std::string> perturb_config;
};

PromptRecord build_prompt_record(const LayoutPrior& prior, std::string instruction,
                                 const std::optional<PerturbConfig>& perturb, uint64_t seed);

// instruction plus the prior block on its own lines; instruction alone when skipped
std::string full_prompt(const PromptRecord& record);

struct OverheadStats {
    int min = 0;
    int max = 0;
    double median = 0;
    double mean = 0;
};

OverheadStats overhead_stats(const std::vector<int>& overheads);

} // namespace docpipe
