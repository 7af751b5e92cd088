#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

// Detects decoder runaway: generations that blow past the token budget
// without ever emitting EOS, usually stuck in a short repeating cycle.

namespace docpipe {

constexpr int kDefaultMaxTokens = 5000;

struct GenerationRecord {
    std::string page_id;
    std::string domain;
    int token_count = 0;
    bool ended_with_eos = false;
    std::vector<std::string> tail_tokens; // last tokens of the generation, possibly truncated
};

// failure means strictly more tokens than the budget and no EOS
bool is_decode_failure(const GenerationRecord& record, int max_tokens = kDefaultMaxTokens);

// Smallest period p such that the last p*min_repeats tail tokens are
// p-periodic; nullopt when no period up to tail/min_repeats fits.
std::optional<int> detect_repetition_period(const std::vector<std::string>& tail,
                                            int min_repeats = 4);

struct DomainStability {
    int pages = 0;
    int failures = 0;
    double failure_rate = 0;
};

struct StabilityReport {
    std::map<std::string, DomainStability> per_domain;
    double overall_failure_rate = 0; // unweighted mean of per-domain rates
};

StabilityReport stability_report(const std::vector<GenerationRecord>& records,
                                 int max_tokens = kDefaultMaxTokens);

} // namespace docpipe
