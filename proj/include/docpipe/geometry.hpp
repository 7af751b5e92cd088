#pragma once

#include <algorithm>

namespace docpipe {

// Axis-aligned box in page pixel coordinates, corners ordered so that
// x_min <= x_max and y_min <= y_max.
struct BBox {
    double x_min = 0;
    double y_min = 0;
    double x_max = 0;
    double y_max = 0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool operator==(const BBox&) const = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
    double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    return w > 0 && h > 0 ? w * h : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

// intersection over the smaller area; the fragment-merge criterion
inline double intersection_over_smaller(const BBox& a, const BBox& b) {
    double smaller = std::min(a.area(), b.area());
    return smaller > 0 ? intersection_area(a, b) / smaller : 0.0;
}

inline BBox union_box(const BBox& a, const BBox& b) {
    return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
            std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

} // namespace docpipe
