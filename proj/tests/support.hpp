#pragma once

#include <string>
#include <vector>

#include "docpipe/doctags.hpp"
#include "docpipe/rng.hpp"

// Random well-formed documents for round-trip and property tests.

namespace testsupport {

inline std::string random_word(docpipe::SplitMix64& rng) {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789.,:;!?()>&#'";
    size_t len = 1 + rng.next_below(9);
    std::string w;
    for (size_t i = 0; i < len; ++i)
        w += alphabet[rng.next_below(sizeof alphabet - 1)];
    return w;
}

inline std::string random_text(docpipe::SplitMix64& rng, int max_words) {
    int words = static_cast<int>(rng.next_below(static_cast<uint64_t>(max_words) + 1));
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += rng.next_below(8) ? " " : "\n";
        out += random_word(rng);
    }
    return out;
}

inline std::string random_gap(docpipe::SplitMix64& rng) {
    static const char* gaps[] = {"", "\n", " ", "\n\n", "\t", "\r\n"};
    return gaps[rng.next_below(6)];
}

inline docpipe::LocBox random_box(docpipe::SplitMix64& rng) {
    int x0 = static_cast<int>(rng.next_below(501));
    int x1 = static_cast<int>(rng.next_below(501));
    int y0 = static_cast<int>(rng.next_below(501));
    int y1 = static_cast<int>(rng.next_below(501));
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    return {x0, y0, x1, y1};
}

inline docpipe::DocElement random_element(docpipe::SplitMix64& rng, int depth) {
    using docpipe::LayoutTag;
    docpipe::DocElement el;
    el.tag = static_cast<LayoutTag>(rng.next_below(docpipe::kLayoutTagCount));
    if (rng.next_below(2)) el.locs = random_box(rng);
    if (el.tag == LayoutTag::otsl) {
        size_t n = rng.next_below(12);
        for (size_t i = 0; i < n; ++i) {
            docpipe::OtslCell cell;
            cell.kind = static_cast<docpipe::OtslCellKind>(rng.next_below(5));
            if (cell.kind == docpipe::OtslCellKind::fcel)
                cell.text = random_text(rng, 3);
            else if (rng.next_below(4) == 0)
                cell.text = random_gap(rng);
            el.cells.push_back(std::move(cell));
        }
        return el;
    }
    el.content = random_text(rng, 6);
    if (depth < 3 && rng.next_below(3) == 0) {
        size_t n = 1 + rng.next_below(3);
        for (size_t i = 0; i < n; ++i) {
            el.children.push_back(random_element(rng, depth + 1));
            el.child_gaps.push_back(random_gap(rng));
        }
    }
    return el;
}

inline docpipe::DocTagsDoc random_doc(docpipe::SplitMix64& rng) {
    docpipe::DocTagsDoc doc;
    doc.layout_wrapped = rng.next_below(4) == 0;
    size_t n = rng.next_below(6);
    doc.gaps[0] = random_gap(rng);
    for (size_t i = 0; i < n; ++i) {
        doc.elements.push_back(random_element(rng, 0));
        doc.gaps.push_back(random_gap(rng));
    }
    if (doc.layout_wrapped) doc.trailing = random_gap(rng);
    return doc;
}

} // namespace testsupport
