#include "docpipe/mock_decoder.hpp"

#include "docpipe/rng.hpp"

namespace docpipe {

namespace {

// best unmatched prior item with the same tag and enough overlap; ties go to
// the earliest item
int match_prior_item(const DocElement& el, const std::vector<PriorItem>& prior,
                     const std::vector<bool>& taken) {
    if (!el.locs) return -1;
    int best = -1;
    double best_iou = 0.5;
    for (size_t i = 0; i < prior.size(); ++i) {
        if (taken[i] || prior[i].tag != el.tag) continue;
        double v = loc_box_iou(*el.locs, prior[i].box);
        if (v > best_iou || (best < 0 && v == best_iou)) {
            best = static_cast<int>(i);
            best_iou = v;
        }
    }
    return best;
}

std::vector<std::string> loop_tail() {
    static const std::vector<std::string> pattern = {
        "<text>", "<loc_1>", "<loc_2>", "<loc_3>", "<loc_4>", "lorem", "</text>",
    };
    std::vector<std::string> tail;
    tail.reserve(kLoopTailLength);
    // start mid-pattern so the window is an arbitrary slice of the stream
    size_t phase = kLoopTokenCount % pattern.size();
    for (int i = 0; i < kLoopTailLength; ++i)
        tail.push_back(pattern[(phase + static_cast<size_t>(i)) % pattern.size()]);
    return tail;
}

} // namespace

MockDecodeResult mock_decode(const DocTagsDoc& truth,
                             const std::optional<std::vector<PriorItem>>& prior,
                             const MockDecodeConfig& config, const std::string& page_id,
                             const std::string& domain) {
    SplitMix64 rng(page_seed(config.seed, page_id));
    MockDecodeResult result;
    result.record.page_id = page_id;
    result.record.domain = domain;

    if (!prior && rng.next_double() < config.loop_rate) {
        result.record.token_count = kLoopTokenCount;
        result.record.ended_with_eos = false;
        result.record.tail_tokens = loop_tail();
        return result; // doc stays empty; nothing usable came back
    }

    std::vector<bool> taken(prior ? prior->size() : 0, false);
    result.doc.layout_wrapped = truth.layout_wrapped;
    result.doc.trailing = truth.trailing;
    result.doc.gaps.front() = truth.gaps.front();
    for (size_t i = 0; i < truth.elements.size(); ++i) {
        const DocElement& el = truth.elements[i];
        bool keep = true;
        if (prior) {
            int m = match_prior_item(el, *prior, taken);
            if (m >= 0)
                taken[static_cast<size_t>(m)] = true;
            else
                keep = rng.next_double() >= config.miss_rate;
        } else {
            keep = rng.next_double() >= config.miss_rate;
        }
        if (keep) {
            result.doc.elements.push_back(el);
            result.doc.gaps.push_back(truth.gaps[i + 1]);
        } else {
            result.doc.gaps.back() += truth.gaps[i + 1];
        }
    }
    result.record.token_count = count_tokens(result.doc);
    result.record.ended_with_eos = true;
    return result;
}

} // namespace docpipe
