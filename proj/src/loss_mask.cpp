#include "docpipe/loss_mask.hpp"

#include <stdexcept>

#include "docpipe/doctags.hpp"

namespace docpipe {

std::vector<int> build_loss_mask(const std::vector<std::string>& tokens) {
    std::vector<int> mask;
    mask.reserve(tokens.size());
    for (const std::string& token : tokens)
        mask.push_back(classify_token(token) == TokenClass::loc ? 0 : 1);
    return mask;
}

MaskedLoss masked_cross_entropy(const TokenSeq& seq) {
    if (!seq.logprobs)
        throw std::invalid_argument("masked cross entropy needs per-token logprobs");
    if (seq.logprobs->size() != seq.tokens.size())
        throw std::invalid_argument("logprob count " + std::to_string(seq.logprobs->size()) +
                                    " does not match token count " +
                                    std::to_string(seq.tokens.size()));
    std::vector<int> mask = build_loss_mask(seq.tokens);
    MaskedLoss loss;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        loss.nll -= (*seq.logprobs)[i];
        ++loss.kept;
    }
    loss.mean_nll = loss.kept ? loss.nll / loss.kept : 0.0;
    return loss;
}

} // namespace docpipe
