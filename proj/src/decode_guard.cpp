#include "docpipe/decode_guard.hpp"

#include <stdexcept>

namespace docpipe {

bool is_decode_failure(const GenerationRecord& record, int max_tokens) {
    return record.token_count > max_tokens && !record.ended_with_eos;
}

std::optional<int> detect_repetition_period(const std::vector<std::string>& tail,
                                            int min_repeats) {
    if (min_repeats < 2) throw std::invalid_argument("min_repeats must be at least 2");
    size_t n = tail.size();
    for (size_t p = 1; p * static_cast<size_t>(min_repeats) <= n; ++p) {
        size_t window = p * static_cast<size_t>(min_repeats);
        size_t begin = n - window;
        bool periodic = true;
        for (size_t i = begin + p; i < n; ++i) {
            if (tail[i] != tail[i - p]) {
                periodic = false;
                break;
            }
        }
        if (periodic) return static_cast<int>(p);
    }
    return std::nullopt;
}

StabilityReport stability_report(const std::vector<GenerationRecord>& records, int max_tokens) {
    if (records.empty()) throw std::invalid_argument("stability report needs at least one page");
    StabilityReport report;
    for (const GenerationRecord& record : records) {
        DomainStability& d = report.per_domain[record.domain];
        ++d.pages;
        if (is_decode_failure(record, max_tokens)) ++d.failures;
    }
    double sum = 0;
    for (auto& [domain, d] : report.per_domain) {
        d.failure_rate = static_cast<double>(d.failures) / d.pages;
        sum += d.failure_rate;
    }
    report.overall_failure_rate = sum / static_cast<double>(report.per_domain.size());
    return report;
}

} // namespace docpipe
