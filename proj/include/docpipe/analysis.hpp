#pragma once

#include <optional>
#include <string>
#include <vector>

// Diagnostics over decoder internals: where generated tokens look in the
// prompt (attention phase shifts) and how far a new corpus drifts from the
// training distribution (kernel MMD on pooled embeddings).

namespace docpipe {

// named contiguous slice of the sequence axis, e.g. image_patches or
// layout_prior or generated
struct Segment {
    std::string name;
    int begin = 0; // inclusive
    int end = 0;   // exclusive
};

struct AttentionTensor {
    int layers = 0;
    int heads = 0;
    int seq = 0;
    std::vector<Segment> segments;
    std::vector<std::string> token_kinds; // one per position, e.g. struct/content/other
    std::vector<double> values;           // layers*heads*seq*seq, row-major

    double at(int layer, int head, int query, int key) const;
};

// Checks shape, non-negativity, and that every attention row sums to 1
// within tolerance. Throws std::invalid_argument on violations.
void validate_attention(const AttentionTensor& attn, double row_sum_tol = 1e-4);

// max over layers and heads, returns seq*seq row-major
std::vector<double> aggregate_attention(const AttentionTensor& attn);

struct PhaseShiftResult {
    std::vector<int> peak_position; // argmax key strictly before each query; -1 for query 0
    std::vector<std::string> peak_segment;
    double frac_struct_to_prior = 0;   // struct tokens peaking in the layout prior
    double frac_content_to_image = 0;  // content tokens peaking in the image patches
    double bimodality_gap = 0;         // frac_struct_to_prior - (1 - frac_content_to_image)
};

// Examines queries inside the generated segment only. Peaks are computed on
// the layer/head-aggregated map; ties resolve to the lowest key index.
PhaseShiftResult phase_shift(const AttentionTensor& attn);

// mean over patch rows; embeddings are row-major patches x dim
std::vector<double> pool_embedding(const std::vector<double>& patch_matrix, int patches, int dim);

// median pairwise Euclidean distance over the pooled union of both samples;
// throws when the median is zero (kernel width would degenerate)
double median_heuristic_sigma(const std::vector<std::vector<double>>& xs,
                              const std::vector<std::vector<double>>& ys);

struct MmdResult {
    double mmd = 0;      // sqrt of the (clamped) squared statistic
    double mmd_sq = 0;
    double sigma = 0;
    double gamma = 0;    // 1 / (2 sigma^2)
    bool biased = false;
};

// RBF-kernel maximum mean discrepancy. The biased form averages all pairs
// including self-pairs; the unbiased form excludes i == j within each sample.
// When sigma is not given it comes from the median heuristic.
MmdResult mmd_rbf(const std::vector<std::vector<double>>& xs,
                  const std::vector<std::vector<double>>& ys, bool biased,
                  std::optional<double> sigma = std::nullopt);

} // namespace docpipe
