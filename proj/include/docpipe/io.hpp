#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "docpipe/analysis.hpp"
#include "docpipe/decode_guard.hpp"
#include "docpipe/layout_post.hpp"
#include "docpipe/loss_mask.hpp"
#include "docpipe/metrics.hpp"
#include "docpipe/prior.hpp"

// Readers and writers for the pipeline's file formats. Corpora are JSONL
// (one page per line), single reports are JSON, documents are .doctags text.
// Writers are atomic (temp file + rename) and emit pages sorted by page_id.

namespace docpipe {

// filesystem trouble: missing files, unreadable dirs, failed writes
class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// structurally broken input: bad JSON, missing fields, schema violations
class FormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

// one parsed JSON value per non-empty line; errors carry the line number
std::vector<nlohmann::json> read_jsonl(const std::string& path);

// Detections corpus. Boxes are clamped to the page bounds on load; corners
// out of order after clamping are a format error.
std::vector<DetectionPage> load_detection_pages(const std::string& path);
void write_detection_pages(const std::string& path, std::vector<DetectionPage> pages);

void write_prompts(const std::string& path, std::vector<PromptRecord> records);
std::vector<PromptRecord> load_prompts(const std::string& path);

std::vector<TokenSeq> load_token_seqs(const std::string& path);

std::vector<GenerationRecord> load_generations(const std::string& path);
void write_generations(const std::string& path, std::vector<GenerationRecord> records);

AttentionTensor load_attention(const std::string& path);

// .csv (one row per point, optionally one label column first or last) or
// JSONL (bare arrays, or objects with an "embedding" field)
std::vector<std::vector<double>> load_embeddings(const std::string& path);

struct FixturePage {
    std::string page_id;
    std::string domain;
    DocTagsDoc truth;
};

// directory of .doctags files described by a manifest.jsonl with
// {"page_id", "domain", optional "file"}
std::vector<FixturePage> load_fixture_dir(const std::string& dir);

// each side is either a directory of <page_id>.doctags files or a JSONL
// manifest of {"page_id", "doctags"}; page ids must match across sides
std::vector<PagePair> load_eval_pairs(const std::string& pred_path, const std::string& ref_path);

// pages of a .doctags corpus, from a directory or JSONL manifest
std::vector<std::pair<std::string, std::string>> load_doctags_corpus(const std::string& path);

} // namespace docpipe
