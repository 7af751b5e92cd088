#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/decode_guard.hpp"
#include "docpipe/doctags.hpp"
#include "docpipe/prior.hpp"

// A stand-in decoder for end-to-end pipeline tests. It never runs a model:
// given the ground-truth page it reproduces exactly the elements the prior
// vouches for, randomly omits the rest, and without a prior occasionally
// degenerates into an unterminated repetition loop.

namespace docpipe {

struct MockDecodeConfig {
    double miss_rate = 0.0; // drop chance for elements the prior does not cover
    double loop_rate = 0.0; // runaway chance, only possible when no prior is given
    uint64_t seed = 0;
};

constexpr int kLoopTokenCount = 12000;
constexpr int kLoopTailLength = 512;

struct MockDecodeResult {
    DocTagsDoc doc;
    GenerationRecord record;
};

// prior == nullopt means the prompt carried no layout block
MockDecodeResult mock_decode(const DocTagsDoc& truth,
                             const std::optional<std::vector<PriorItem>>& prior,
                             const MockDecodeConfig& config, const std::string& page_id,
                             const std::string& domain);

} // namespace docpipe
