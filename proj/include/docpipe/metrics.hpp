#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/doctags.hpp"

// Structural and textual comparison of predicted vs reference documents:
// normalized edit distance, token F1, BLEU-4, table TEDS, and a reading-order
// agreement score.

namespace docpipe {

// UTF-8 decode; each invalid byte becomes a private symbol above the
// Unicode range so malformed input still diffs sensibly.
std::vector<uint32_t> decode_utf8(std::string_view s);

// whitespace-separated words
std::vector<std::string> split_words(std::string_view s);

// Levenshtein over codepoints, divided by the longer length; 0 for two
// empty strings.
double normalized_edit_distance(std::string_view a, std::string_view b);

struct Prf {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

// multiset overlap of tokens; two empty sequences count as a perfect match
Prf token_prf(const std::vector<std::string>& pred, const std::vector<std::string>& ref);

// BLEU with uniform 1..4-gram weights, brevity penalty, and add-one
// smoothing on the higher-order precisions.
double bleu4(const std::vector<std::string>& pred, const std::vector<std::string>& ref);

// ordered labeled tree for edit-distance scoring
struct TreeNode {
    std::string label;
    std::vector<TreeNode> children;
};

int tree_size(const TreeNode& node);

// exact tree edit distance with unit insert/delete/relabel costs
int tree_edit_distance(const TreeNode& a, const TreeNode& b);

// Table markup -> grid tree: root, one node per row, one node per cell that
// originates in that row. Cell labels carry span geometry and, unless
// structure_only, the cell text. Throws ParseError(malformed_otsl) when a
// continuation cell has nothing to continue.
TreeNode otsl_to_tree(const DocElement& table, bool structure_only);

// 1 - TED / max(|pred|, |ref|)
double teds(const DocElement& pred, const DocElement& ref, bool structure_only);

// Matches same-tag boxes between the two documents by best IoU (>= 0.5) and
// scores how far the predicted order strays from the reference order, as a
// normalized edit distance; 0 is perfect agreement.
double reading_order_ed(const DocTagsDoc& pred, const DocTagsDoc& ref);

// plain-text projection used by the textual metrics: one line per element,
// table rows joined with " | "
std::string flatten_text(const DocTagsDoc& doc);

struct PagePair {
    std::string page_id;
    DocTagsDoc pred;
    DocTagsDoc ref;
};

struct PageMetrics {
    std::string page_id;
    double bleu = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double edit_dist = 0;
    std::optional<double> teds;   // only when the reference page has tables
    std::optional<double> teds_s;
    double reading_order = 0;
};

struct MetricReport {
    int pages = 0;
    double bleu = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double edit_dist = 0;
    std::optional<double> teds;
    std::optional<double> teds_s;
    double reading_order = 0;
    std::vector<PageMetrics> per_page; // sorted by page_id
};

PageMetrics evaluate_page(const PagePair& pair);
MetricReport evaluate_corpus(std::vector<PagePair> pairs);

} // namespace docpipe
