#include "docpipe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace docpipe {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

// sum of exp(-gamma * ||a_i - b_j||^2) over all pairs, self-pairs included.
// Both MMD terms go through here so identical samples cancel exactly.
double kernel_sum(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b, double gamma) {
    double s = 0;
    for (const auto& x : a)
        for (const auto& y : b) s += std::exp(-gamma * sq_dist(x, y));
    return s;
}

void check_sample(const std::vector<std::vector<double>>& sample, const char* which) {
    if (sample.empty())
        throw std::invalid_argument(std::string(which) + " sample is empty");
    size_t dim = sample.front().size();
    if (dim == 0) throw std::invalid_argument(std::string(which) + " sample has zero-dim points");
    for (const auto& p : sample)
        if (p.size() != dim)
            throw std::invalid_argument(std::string(which) + " sample has ragged dimensions");
}

const Segment* find_segment(const AttentionTensor& attn, std::string_view name) {
    for (const Segment& seg : attn.segments)
        if (seg.name == name) return &seg;
    return nullptr;
}

} // namespace

double AttentionTensor::at(int layer, int head, int query, int key) const {
    size_t idx = ((static_cast<size_t>(layer) * static_cast<size_t>(heads) +
                   static_cast<size_t>(head)) *
                      static_cast<size_t>(seq) +
                  static_cast<size_t>(query)) *
                     static_cast<size_t>(seq) +
                 static_cast<size_t>(key);
    return values[idx];
}

void validate_attention(const AttentionTensor& attn, double row_sum_tol) {
    if (attn.layers <= 0 || attn.heads <= 0 || attn.seq <= 0)
        throw std::invalid_argument("attention tensor dimensions must be positive");
    size_t expected = static_cast<size_t>(attn.layers) * static_cast<size_t>(attn.heads) *
                      static_cast<size_t>(attn.seq) * static_cast<size_t>(attn.seq);
    if (attn.values.size() != expected)
        throw std::invalid_argument("attention value count " + std::to_string(attn.values.size()) +
                                    " does not match layers*heads*seq*seq");
    if (attn.token_kinds.size() != static_cast<size_t>(attn.seq))
        throw std::invalid_argument("token_kinds must have one entry per sequence position");
    if (attn.segments.empty())
        throw std::invalid_argument("attention tensor needs at least one segment");
    int cursor = 0;
    for (const Segment& seg : attn.segments) {
        if (seg.begin != cursor || seg.end <= seg.begin)
            throw std::invalid_argument("segments must tile the sequence in order: " + seg.name);
        cursor = seg.end;
    }
    if (cursor != attn.seq)
        throw std::invalid_argument("segments must cover the whole sequence");
    for (int l = 0; l < attn.layers; ++l) {
        for (int h = 0; h < attn.heads; ++h) {
            for (int q = 0; q < attn.seq; ++q) {
                double sum = 0;
                for (int k = 0; k < attn.seq; ++k) {
                    double v = attn.at(l, h, q, k);
                    if (v < 0) throw std::invalid_argument("attention weights must be non-negative");
                    sum += v;
                }
                if (std::abs(sum - 1.0) > row_sum_tol)
                    throw std::invalid_argument("attention row does not sum to 1: layer " +
                                                std::to_string(l) + " head " + std::to_string(h) +
                                                " query " + std::to_string(q));
            }
        }
    }
}

std::vector<double> aggregate_attention(const AttentionTensor& attn) {
    validate_attention(attn);
    size_t s = static_cast<size_t>(attn.seq);
    std::vector<double> agg(s * s, 0.0);
    for (int l = 0; l < attn.layers; ++l)
        for (int h = 0; h < attn.heads; ++h)
            for (int q = 0; q < attn.seq; ++q)
                for (int k = 0; k < attn.seq; ++k) {
                    double v = attn.at(l, h, q, k);
                    double& cell = agg[static_cast<size_t>(q) * s + static_cast<size_t>(k)];
                    if (v > cell) cell = v;
                }
    return agg;
}

PhaseShiftResult phase_shift(const AttentionTensor& attn) {
    std::vector<double> agg = aggregate_attention(attn);
    const Segment* generated = find_segment(attn, "generated");
    if (!generated)
        throw std::invalid_argument("attention tensor has no generated segment");
    const Segment* prior = find_segment(attn, "layout_prior");
    const Segment* image = find_segment(attn, "image_patches");

    auto segment_name = [&](int pos) -> const std::string& {
        for (const Segment& seg : attn.segments)
            if (pos >= seg.begin && pos < seg.end) return seg.name;
        throw std::logic_error("position outside all segments");
    };

    PhaseShiftResult result;
    int struct_total = 0, struct_prior = 0;
    int content_total = 0, content_image = 0;
    size_t s = static_cast<size_t>(attn.seq);
    for (int q = generated->begin; q < generated->end; ++q) {
        if (q == 0) { // nothing before the first position to attend to
            result.peak_position.push_back(-1);
            result.peak_segment.emplace_back();
            continue;
        }
        int best = 0;
        double best_v = agg[static_cast<size_t>(q) * s];
        for (int k = 1; k < q; ++k) {
            double v = agg[static_cast<size_t>(q) * s + static_cast<size_t>(k)];
            if (v > best_v) { // ties keep the lowest key index
                best_v = v;
                best = k;
            }
        }
        result.peak_position.push_back(best);
        const std::string& seg = segment_name(best);
        result.peak_segment.push_back(seg);
        const std::string& kind = attn.token_kinds[static_cast<size_t>(q)];
        if (kind == "struct") {
            ++struct_total;
            if (prior && best >= prior->begin && best < prior->end) ++struct_prior;
        } else if (kind == "content") {
            ++content_total;
            if (image && best >= image->begin && best < image->end) ++content_image;
        }
    }
    if (struct_total)
        result.frac_struct_to_prior = static_cast<double>(struct_prior) / struct_total;
    if (content_total)
        result.frac_content_to_image = static_cast<double>(content_image) / content_total;
    result.bimodality_gap = result.frac_struct_to_prior - (1.0 - result.frac_content_to_image);
    return result;
}

std::vector<double> pool_embedding(const std::vector<double>& patch_matrix, int patches, int dim) {
    if (patches <= 0 || dim <= 0)
        throw std::invalid_argument("embedding pooling needs positive patch count and dim");
    if (patch_matrix.size() != static_cast<size_t>(patches) * static_cast<size_t>(dim))
        throw std::invalid_argument("embedding matrix size does not match patches*dim");
    std::vector<double> pooled(static_cast<size_t>(dim), 0.0);
    for (int p = 0; p < patches; ++p)
        for (int d = 0; d < dim; ++d)
            pooled[static_cast<size_t>(d)] +=
                patch_matrix[static_cast<size_t>(p) * static_cast<size_t>(dim) +
                             static_cast<size_t>(d)];
    for (double& v : pooled) v /= patches;
    return pooled;
}

double median_heuristic_sigma(const std::vector<std::vector<double>>& xs,
                              const std::vector<std::vector<double>>& ys) {
    check_sample(xs, "first");
    check_sample(ys, "second");
    if (xs.front().size() != ys.front().size())
        throw std::invalid_argument("samples have different dimensions");
    std::vector<std::vector<double>> pooled = xs;
    pooled.insert(pooled.end(), ys.begin(), ys.end());
    std::vector<double> dists;
    dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j)
            dists.push_back(std::sqrt(sq_dist(pooled[i], pooled[j])));
    if (dists.empty())
        throw std::invalid_argument("median heuristic needs at least two pooled points");
    std::sort(dists.begin(), dists.end());
    size_t n = dists.size();
    double median = n % 2 ? dists[n / 2] : (dists[n / 2 - 1] + dists[n / 2]) / 2.0;
    if (median <= 0)
        throw std::invalid_argument("median pairwise distance is zero; kernel width degenerates");
    return median;
}

MmdResult mmd_rbf(const std::vector<std::vector<double>>& xs,
                  const std::vector<std::vector<double>>& ys, bool biased,
                  std::optional<double> sigma) {
    check_sample(xs, "first");
    check_sample(ys, "second");
    if (xs.front().size() != ys.front().size())
        throw std::invalid_argument("samples have different dimensions");
    MmdResult result;
    result.biased = biased;
    result.sigma = sigma ? *sigma : median_heuristic_sigma(xs, ys);
    if (!(result.sigma > 0)) throw std::invalid_argument("sigma must be positive");
    result.gamma = 1.0 / (2.0 * result.sigma * result.sigma);
    double n = static_cast<double>(xs.size());
    double m = static_cast<double>(ys.size());
    double kxx = kernel_sum(xs, xs, result.gamma);
    double kyy = kernel_sum(ys, ys, result.gamma);
    double kxy = kernel_sum(xs, ys, result.gamma);
    if (biased) {
        result.mmd_sq = kxx / (n * n) + kyy / (m * m) - 2.0 * kxy / (n * m);
    } else {
        if (xs.size() < 2 || ys.size() < 2)
            throw std::invalid_argument("unbiased estimator needs at least two points per sample");
        result.mmd_sq =
            (kxx - n) / (n * (n - 1.0)) + (kyy - m) / (m * (m - 1.0)) - 2.0 * kxy / (n * m);
    }
    result.mmd = std::sqrt(std::max(result.mmd_sq, 0.0));
    return result;
}

} // namespace docpipe
