#include "docpipe/layout_post.hpp"

#include <algorithm>
#include <array>

namespace docpipe {

namespace {

constexpr std::array<std::string_view, kDetectorClassCount> kClassNames = {
    "Caption",
    "Footnote",
    "Formula",
    "List-item",
    "Page-footer",
    "Page-header",
    "Picture",
    "Section-header",
    "Table",
    "Text",
    "Title",
    "Document Index",
    "Code",
    "Checkbox-Selected",
    "Checkbox-Unselected",
    "Form",
    "Key-Value Region",
};

} // namespace

std::string_view detector_class_name(int cls) {
    return cls >= 0 && cls < kDetectorClassCount ? kClassNames[static_cast<size_t>(cls)]
                                                 : std::string_view("unknown");
}

bool detection_before(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cls != b.cls) return a.cls < b.cls;
    if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
    if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
    if (a.box.x_max != b.box.x_max) return a.box.x_max < b.box.x_max;
    return a.box.y_max < b.box.y_max;
}

void sort_canonical(std::vector<Detection>& dets) {
    std::stable_sort(dets.begin(), dets.end(), detection_before);
}

std::vector<Detection> filter_confidence(std::vector<Detection> dets, double tau) {
    std::erase_if(dets, [tau](const Detection& d) { return !(d.score > tau); });
    return dets;
}

std::vector<Detection> merge_fragments(std::vector<Detection> dets, double ios_threshold) {
    sort_canonical(dets);
    bool merged = true;
    while (merged) {
        merged = false;
        for (size_t i = 0; i < dets.size() && !merged; ++i) {
            for (size_t j = i + 1; j < dets.size() && !merged; ++j) {
                if (dets[i].cls != dets[j].cls) continue;
                if (intersection_over_smaller(dets[i].box, dets[j].box) < ios_threshold) continue;
                dets[i].box = union_box(dets[i].box, dets[j].box);
                dets[i].score = std::max(dets[i].score, dets[j].score);
                dets.erase(dets.begin() + static_cast<ptrdiff_t>(j));
                sort_canonical(dets);
                merged = true;
            }
        }
    }
    return dets;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
    sort_canonical(dets);
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const Detection& d : dets) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.cls == d.cls && iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<Detection> postprocess(const DetectionPage& page, const PostprocessConfig& config) {
    std::vector<Detection> dets = filter_confidence(page.detections, config.confidence_tau);
    dets = merge_fragments(std::move(dets), config.merge_ios);
    return nms(std::move(dets), config.nms_iou);
}

} // namespace docpipe
