#include "docpipe/prior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "docpipe/rng.hpp"

namespace docpipe {

namespace {

constexpr std::array<LayoutTag, kDetectorClassCount> kClassToTag = {
    LayoutTag::caption,            // 0
    LayoutTag::footnote,           // 1
    LayoutTag::formula,            // 2
    LayoutTag::list_item,          // 3
    LayoutTag::page_footer,        // 4
    LayoutTag::page_header,        // 5
    LayoutTag::picture,            // 6
    LayoutTag::section_header,     // 7
    LayoutTag::otsl,               // 8, tables are emitted in table markup
    LayoutTag::text,               // 9
    LayoutTag::title,              // 10
    LayoutTag::document_index,     // 11
    LayoutTag::code,               // 12
    LayoutTag::checkbox_selected,  // 13
    LayoutTag::checkbox_unselected,// 14
    LayoutTag::form,               // 15
    LayoutTag::key_value_region,   // 16
};

constexpr int kBandTolerance = 10;

int quantize_coord(double value, double extent) {
    double scaled = value / extent * kLocGridMax;
    long long rounded = std::llround(scaled); // round half away from zero
    return static_cast<int>(std::clamp<long long>(rounded, 0, kLocGridMax));
}

// number with at least one decimal digit, e.g. 1 -> "1.0", 0.3 -> "0.3"
std::string format_prob(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", value);
    std::string s = buf;
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
    return s;
}

} // namespace

LayoutTag map_class(int cls) {
    if (cls < 0 || cls >= kDetectorClassCount)
        throw std::out_of_range("unknown detector class " + std::to_string(cls));
    return kClassToTag[static_cast<size_t>(cls)];
}

LocBox quantize_box(const BBox& box, double page_width, double page_height) {
    if (!(page_width > 0) || !(page_height > 0))
        throw std::invalid_argument("page dimensions must be positive");
    return {quantize_coord(box.x_min, page_width), quantize_coord(box.y_min, page_height),
            quantize_coord(box.x_max, page_width), quantize_coord(box.y_max, page_height)};
}

std::vector<PriorItem> reading_order(std::vector<PriorItem> items) {
    std::stable_sort(items.begin(), items.end(), [](const PriorItem& a, const PriorItem& b) {
        if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
        if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
        if (a.box.y_max != b.box.y_max) return a.box.y_max < b.box.y_max;
        return a.box.x_max < b.box.x_max;
    });
    // chain adjacent items into a band while they stay close in y and their
    // vertical extents genuinely overlap, then order each band left to right
    size_t band_begin = 0;
    for (size_t i = 1; i <= items.size(); ++i) {
        bool chained = false;
        if (i < items.size()) {
            const LocBox& prev = items[i - 1].box;
            const LocBox& cur = items[i].box;
            bool close = cur.y_min - prev.y_min <= kBandTolerance;
            bool overlaps = cur.y_min == prev.y_min ||
                            std::min(cur.y_max, prev.y_max) - std::max(cur.y_min, prev.y_min) > 0;
            chained = close && overlaps;
        }
        if (!chained) {
            std::stable_sort(items.begin() + static_cast<ptrdiff_t>(band_begin),
                             items.begin() + static_cast<ptrdiff_t>(i),
                             [](const PriorItem& a, const PriorItem& b) {
                                 return a.box.x_min < b.box.x_min;
                             });
            band_begin = i;
        }
    }
    return items;
}

LayoutPrior build_prior(const DetectionPage& page, const PostprocessConfig& config) {
    std::vector<PriorItem> items;
    for (const Detection& det : postprocess(page, config))
        items.push_back({map_class(det.cls), quantize_box(det.box, page.width, page.height)});
    return {page.page_id, reading_order(std::move(items))};
}

std::string serialize_prior_items(const std::vector<PriorItem>& items) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += '\n';
        DocElement el;
        el.tag = items[i].tag;
        el.locs = items[i].box;
        out += serialize(el);
    }
    return out;
}

std::string prior_block(const std::vector<PriorItem>& items) {
    std::string out = "<layout>\n";
    if (!items.empty()) {
        out += serialize_prior_items(items);
        out += '\n';
    }
    out += "</layout>";
    return out;
}

std::string perturb_config_name(const PerturbConfig& config) {
    return std::string(config.shuffle ? "ys" : "ns") + "-" + format_prob(config.injection_prob) +
           "-" + format_prob(config.dropout);
}

PerturbConfig parse_perturb_config(const std::string& name) {
    size_t first = name.find('-');
    size_t second = first == std::string::npos ? std::string::npos : name.find('-', first + 1);
    if (second == std::string::npos)
        throw std::invalid_argument("perturbation name must look like ys-1.0-0.3: " + name);
    std::string flag = name.substr(0, first);
    if (flag != "ys" && flag != "ns")
        throw std::invalid_argument("perturbation shuffle flag must be ys or ns: " + name);
    PerturbConfig config;
    config.shuffle = flag == "ys";
    try {
        size_t used = 0;
        std::string p = name.substr(first + 1, second - first - 1);
        config.injection_prob = std::stod(p, &used);
        if (used != p.size()) throw std::invalid_argument(p);
        std::string d = name.substr(second + 1);
        config.dropout = std::stod(d, &used);
        if (used != d.size()) throw std::invalid_argument(d);
    } catch (const std::exception&) {
        throw std::invalid_argument("perturbation name has non-numeric fields: " + name);
    }
    if (config.injection_prob < 0 || config.injection_prob > 1 || config.dropout < 0 ||
        config.dropout > 1)
        throw std::invalid_argument("perturbation probabilities must lie in [0, 1]: " + name);
    return config;
}

PerturbResult apply_perturbations(const std::vector<PriorItem>& items,
                                  const PerturbConfig& config, uint64_t seed) {
    SplitMix64 rng(seed);
    PerturbResult result;
    if (rng.next_double() >= config.injection_prob) {
        result.skipped = true;
        return result;
    }
    for (const PriorItem& item : items) {
        double u = rng.next_double();
        if (u >= config.dropout) result.items.push_back(item);
    }
    if (config.shuffle && result.items.size() > 1) {
        for (size_t i = result.items.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(rng.next_below(i + 1));
            std::swap(result.items[i], result.items[j]);
        }
    }
    return result;
}

PromptRecord build_prompt_record(const LayoutPrior& prior, std::string instruction,
                                 const std::optional<PerturbConfig>& perturb, uint64_t seed) {
    PromptRecord record;
    record.page_id = prior.page_id;
    record.instruction = std::move(instruction);
    std::vector<PriorItem> items = prior.items;
    if (perturb) {
        record.perturb_config = perturb_config_name(*perturb);
        PerturbResult result = apply_perturbations(items, *perturb, page_seed(seed, prior.page_id));
        if (result.skipped) {
            record.prior.clear();
            record.token_overhead = 0;
            return record;
        }
        items = std::move(result.items);
    }
    record.prior = prior_block(items);
    record.token_overhead = count_tokens(record.prior);
    return record;
}

std::string full_prompt(const PromptRecord& record) {
    if (record.prior.empty()) return record.instruction;
    return record.instruction + "\n" + record.prior;
}

OverheadStats overhead_stats(const std::vector<int>& overheads) {
    if (overheads.empty()) throw std::invalid_argument("overhead stats need at least one prompt");
    std::vector<int> sorted = overheads;
    std::sort(sorted.begin(), sorted.end());
    OverheadStats stats;
    stats.min = sorted.front();
    stats.max = sorted.back();
    size_t n = sorted.size();
    stats.median = n % 2 ? sorted[n / 2]
                         : (static_cast<double>(sorted[n / 2 - 1]) + sorted[n / 2]) / 2.0;
    double sum = 0;
    for (int v : sorted) sum += v;
    stats.mean = sum / static_cast<double>(n);
    return stats;
}

} // namespace docpipe
