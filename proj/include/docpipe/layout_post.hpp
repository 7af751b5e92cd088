#pragma once

#include <string>
#include <vector>

#include "docpipe/geometry.hpp"

// Deterministic post-processing of raw layout detector output: confidence
// filter, same-class fragment merge, then per-class non-maximum suppression.

namespace docpipe {

constexpr int kDetectorClassCount = 17;

// detector class id as trained; names come from detector_class_name()
struct Detection {
    int cls = 0;
    double score = 0;
    BBox box;

    bool operator==(const Detection&) const = default;
};

struct DetectionPage {
    std::string page_id;
    double width = 0;
    double height = 0;
    std::vector<Detection> detections;
};

std::string_view detector_class_name(int cls);

struct PostprocessConfig {
    double confidence_tau = 0.6; // keep strictly above
    double nms_iou = 0.5;        // suppress strictly above
    double merge_ios = 0.8;      // merge at or above
};

// keeps detections with score strictly greater than tau, order preserved
std::vector<Detection> filter_confidence(std::vector<Detection> dets, double tau);

// Repeatedly merges same-class pairs whose intersection-over-smaller-area
// reaches the threshold, replacing them with the union box and the max score,
// until no pair qualifies. Scanning follows the canonical order (score desc,
// then class, then corners) so the fixed point does not depend on input order.
std::vector<Detection> merge_fragments(std::vector<Detection> dets, double ios_threshold);

// classic greedy NMS, applied independently per class
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

// filter -> merge -> nms, returned in canonical order
std::vector<Detection> postprocess(const DetectionPage& page, const PostprocessConfig& config);

// canonical ordering used everywhere detections are compared or emitted
bool detection_before(const Detection& a, const Detection& b);
void sort_canonical(std::vector<Detection>& dets);

} // namespace docpipe
