#include <doctest.h>

#include <set>

#include "docpipe/prior.hpp"
#include "docpipe/rng.hpp"
#include "golden.hpp"

using namespace docpipe;

namespace {

PriorItem item(LayoutTag tag, int x0, int y0, int x1, int y1) {
    return {tag, {x0, y0, x1, y1}};
}

using testsupport::article_page;
using testsupport::kArticlePrompt;

} // namespace

TEST_CASE("coordinate quantization rounds half away from zero and clamps") {
    CHECK(quantize_box({0, 0, 1000, 1000}, 1000, 1000) == LocBox{0, 0, 500, 500});
    CHECK(quantize_box({500, 0, 999, 1000}, 1000, 1000) == LocBox{250, 0, 500, 500});
    CHECK(quantize_box({1, 0, 3, 1000}, 1000, 1000) == LocBox{1, 0, 2, 500}); // 0.5 -> 1, 1.5 -> 2
    CHECK(quantize_box({0, 0, 2000, 50}, 1000, 100) == LocBox{0, 0, 500, 250}); // clamp high
    CHECK_THROWS_AS(quantize_box({0, 0, 1, 1}, 0, 100), std::invalid_argument);
    CHECK_THROWS_AS(quantize_box({0, 0, 1, 1}, 100, -5), std::invalid_argument);
}

TEST_CASE("detector classes map onto markup tags") {
    CHECK(map_class(0) == LayoutTag::caption);
    CHECK(map_class(3) == LayoutTag::list_item);
    CHECK(map_class(8) == LayoutTag::otsl);
    CHECK(map_class(9) == LayoutTag::text);
    CHECK(map_class(16) == LayoutTag::key_value_region);
    CHECK_THROWS_AS(map_class(17), std::out_of_range);
    CHECK_THROWS_AS(map_class(-1), std::out_of_range);
}

TEST_CASE("reading order: same-line items go left to right") {
    std::vector<PriorItem> ordered = reading_order({
        item(LayoutTag::text, 200, 100, 300, 110),
        item(LayoutTag::text, 100, 103, 190, 111),
    });
    CHECK(ordered[0].box.x_min == 100);
    CHECK(ordered[1].box.x_min == 200);
}

TEST_CASE("reading order: equal y_min forms a band even without overlap slack") {
    std::vector<PriorItem> ordered = reading_order({
        item(LayoutTag::text, 300, 50, 400, 60),
        item(LayoutTag::text, 100, 50, 200, 60),
    });
    CHECK(ordered[0].box.x_min == 100);
}

TEST_CASE("reading order: nearby rows that do not overlap stay top to bottom") {
    // second item starts 6 units below but the extents are disjoint, so the
    // left-of rule must not kick in
    std::vector<PriorItem> ordered = reading_order({
        item(LayoutTag::caption, 132, 296, 295, 302),
        item(LayoutTag::otsl, 131, 302, 441, 459),
    });
    CHECK(ordered[0].tag == LayoutTag::caption);
    CHECK(ordered[1].tag == LayoutTag::otsl);
}

TEST_CASE("reading order: bands chain across overlapping neighbors") {
    // y order alone would give 400, 250, 100; the chained band flips it
    std::vector<PriorItem> ordered = reading_order({
        item(LayoutTag::text, 400, 100, 450, 122),
        item(LayoutTag::text, 250, 104, 390, 126),
        item(LayoutTag::text, 100, 108, 240, 130),
    });
    CHECK(ordered[0].box.x_min == 100);
    CHECK(ordered[1].box.x_min == 250);
    CHECK(ordered[2].box.x_min == 400);
}

TEST_CASE("prior block serialization and token overhead") {
    CHECK(prior_block({}) == "<layout>\n</layout>");
    std::vector<PriorItem> items = {item(LayoutTag::text, 1, 2, 3, 4)};
    CHECK(prior_block(items) == "<layout>\n<text><loc_1><loc_2><loc_3><loc_4></text>\n</layout>");
    SplitMix64 rng(0x5eed0020);
    for (int n = 0; n <= 24; ++n) {
        std::vector<PriorItem> many;
        for (int i = 0; i < n; ++i)
            many.push_back({static_cast<LayoutTag>(rng.next_below(kLayoutTagCount)),
                            {1, 2, 3, 4}});
        CHECK(count_tokens(prior_block(many)) == 6 * n + 2);
    }
}

TEST_CASE("detections to prompt, end to end") {
    LayoutPrior prior = build_prior(article_page(), {});
    REQUIRE(prior.items.size() == 10);
    PromptRecord record =
        build_prompt_record(prior, std::string(kDefaultInstruction), std::nullopt, 0);
    CHECK(full_prompt(record) == kArticlePrompt);
    CHECK(record.token_overhead == 62); // 6 * 10 + 2
    CHECK(record.perturb_config == std::nullopt);
}

TEST_CASE("perturbation names follow the shuffle-injection-dropout convention") {
    CHECK(perturb_config_name({false, 0.8, 0.0}) == "ns-0.8-0.0");
    CHECK(perturb_config_name({true, 1.0, 0.3}) == "ys-1.0-0.3");
    for (const char* name :
         {"ns-0.8-0.0", "ns-1.0-0.0", "ys-0.8-0.0", "ys-1.0-0.0", "ys-1.0-0.3"}) {
        PerturbConfig config = parse_perturb_config(name);
        CHECK(perturb_config_name(config) == name);
    }
    CHECK_THROWS_AS(parse_perturb_config("maybe-1.0-0.0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_perturb_config("ys-1.0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_perturb_config("ys-abc-0.0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_perturb_config("ys-1.5-0.0"), std::invalid_argument);
}

TEST_CASE("perturbations: injection gate and dropout edge cases") {
    std::vector<PriorItem> items;
    for (int i = 0; i < 10; ++i) items.push_back(item(LayoutTag::text, i, i, i + 1, i + 1));
    SplitMix64 seeds(0x5eed0021);
    for (int trial = 0; trial < 50; ++trial) {
        uint64_t seed = seeds.next();
        PerturbResult always = apply_perturbations(items, {false, 1.0, 0.0}, seed);
        CHECK_FALSE(always.skipped);
        CHECK(always.items == items);
        PerturbResult never = apply_perturbations(items, {false, 0.0, 0.0}, seed);
        CHECK(never.skipped);
        CHECK(never.items.empty());
        PerturbResult dropped = apply_perturbations(items, {false, 1.0, 1.0}, seed);
        CHECK_FALSE(dropped.skipped);
        CHECK(dropped.items.empty());
    }
}

TEST_CASE("perturbations are reproducible and shuffling permutes") {
    std::vector<PriorItem> items;
    for (int i = 0; i < 8; ++i) items.push_back(item(LayoutTag::text, i, i, i + 1, i + 1));
    PerturbConfig config{true, 1.0, 0.0};
    PerturbResult a = apply_perturbations(items, config, 42);
    PerturbResult b = apply_perturbations(items, config, 42);
    CHECK(a.items == b.items);
    std::multiset<int> original, shuffled;
    for (const PriorItem& it : items) original.insert(it.box.x_min);
    for (const PriorItem& it : a.items) shuffled.insert(it.box.x_min);
    CHECK(original == shuffled); // same multiset, possibly different order
    bool any_moved = false;
    for (size_t i = 0; i < items.size(); ++i)
        if (!(a.items[i] == items[i])) any_moved = true;
    CHECK(any_moved);
}

TEST_CASE("dropout keeps about seven of ten items at d=0.3") {
    std::vector<PriorItem> items;
    for (int i = 0; i < 10; ++i) items.push_back(item(LayoutTag::text, i, i, i + 1, i + 1));
    PerturbConfig config{false, 1.0, 0.3};
    long long total = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
        total += static_cast<long long>(
            apply_perturbations(items, config, page_seed(7, "page-" + std::to_string(t)))
                .items.size());
    double mean = static_cast<double>(total) / trials;
    CHECK(mean > 6.9);
    CHECK(mean < 7.1);
}

TEST_CASE("skipped priors produce a bare instruction and zero overhead") {
    LayoutPrior prior{"p1", {item(LayoutTag::text, 1, 2, 3, 4)}};
    PromptRecord record = build_prompt_record(prior, std::string(kDefaultInstruction),
                                              PerturbConfig{false, 0.0, 0.0}, 99);
    CHECK(record.prior.empty());
    CHECK(record.token_overhead == 0);
    CHECK(full_prompt(record) == kDefaultInstruction);
    REQUIRE(record.perturb_config.has_value());
    CHECK(*record.perturb_config == "ns-0.0-0.0");
}

TEST_CASE("overhead statistics match hand-computed order statistics") {
    OverheadStats odd = overhead_stats({0, 62, 74});
    CHECK(odd.min == 0);
    CHECK(odd.max == 74);
    CHECK(odd.median == 62.0);
    CHECK(odd.mean == doctest::Approx(136.0 / 3.0));
    OverheadStats even = overhead_stats({62, 0, 74, 26, 38, 14});
    CHECK(even.median == doctest::Approx(32.0)); // (26 + 38) / 2
    CHECK_THROWS_AS(overhead_stats({}), std::invalid_argument);
}
