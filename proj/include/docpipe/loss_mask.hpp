#pragma once

#include <optional>
#include <string>
#include <vector>

// Location tokens carry detector geometry the model should condition on but
// not be graded on, so training loss zeroes them out of the cross entropy.

namespace docpipe {

struct TokenSeq {
    std::vector<std::string> tokens;
    std::optional<std::vector<double>> logprobs;
};

// 1 for tokens that contribute to the loss, 0 for location tokens
std::vector<int> build_loss_mask(const std::vector<std::string>& tokens);

struct MaskedLoss {
    double nll = 0;      // negative sum of log-probs over unmasked tokens
    int kept = 0;        // unmasked token count
    double mean_nll = 0; // nll / kept, 0 when nothing is kept
};

// Throws std::invalid_argument when logprobs are missing or the lengths
// disagree with the token list.
MaskedLoss masked_cross_entropy(const TokenSeq& seq);

} // namespace docpipe
