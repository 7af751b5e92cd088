#include "docpipe/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "docpipe/decode_guard.hpp"
#include "docpipe/io.hpp"
#include "docpipe/mock_decoder.hpp"

namespace fs = std::filesystem;

namespace docpipe::cli {

namespace {

using nlohmann::json;

// flag-level problems found after CLI11 parsing (bad --degrade syntax etc.)
class FlagsError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

void emit_error(const char* kind, const std::string& message) {
    json j = {{"error", message}, {"kind", kind}};
    std::cerr << j.dump() << "\n";
}

std::string fmt(double v) {
    return json(v).dump(); // shortest round-trip representation, deterministic
}

struct PostprocessArgs {
    std::string detections, out;
    PostprocessConfig config;
};

void run_postprocess(const PostprocessArgs& args) {
    std::vector<DetectionPage> pages = load_detection_pages(args.detections);
    for (DetectionPage& page : pages) page.detections = postprocess(page, args.config);
    write_detection_pages(args.out, std::move(pages));
}

struct PriorArgs {
    std::string detections, out;
    std::string instruction = std::string(kDefaultInstruction);
    std::string perturb;
    std::string dims_manifest;
    uint64_t seed = 0;
    PostprocessConfig config;
};

void run_prior(const PriorArgs& args) {
    std::vector<DetectionPage> pages = load_detection_pages(args.detections);
    std::optional<PerturbConfig> perturb;
    if (!args.perturb.empty()) {
        try {
            perturb = parse_perturb_config(args.perturb);
        } catch (const std::invalid_argument& e) {
            throw FlagsError(e.what());
        }
    }
    if (!args.dims_manifest.empty()) {
        std::map<std::string, std::pair<double, double>> dims;
        for (const json& j : read_jsonl(args.dims_manifest)) {
            std::string id = j.at("page_id").get<std::string>();
            dims[id] = {j.at("width").get<double>(), j.at("height").get<double>()};
        }
        for (DetectionPage& page : pages) {
            auto it = dims.find(page.page_id);
            if (it == dims.end())
                throw FormatError("page " + page.page_id + " missing from " + args.dims_manifest);
            page.width = it->second.first;
            page.height = it->second.second;
        }
    }
    std::vector<PromptRecord> records;
    records.reserve(pages.size());
    for (const DetectionPage& page : pages) {
        LayoutPrior prior = build_prior(page, args.config);
        records.push_back(build_prompt_record(prior, args.instruction, perturb, args.seed));
    }
    write_prompts(args.out, std::move(records));
}

void run_validate(const std::string& corpus) {
    auto pages = load_doctags_corpus(corpus);
    for (const auto& [page_id, text] : pages) {
        DocTagsDoc doc = parse(text); // throws ParseError with offset on bad markup
        if (serialize(doc) != text)
            throw FormatError("round-trip mismatch for page " + page_id);
    }
    json j = {{"pages", pages.size()}, {"ok", true}};
    std::cout << j.dump() << "\n";
}

void run_mask(const std::string& tokens_path, const std::string& out) {
    std::vector<TokenSeq> seqs = load_token_seqs(tokens_path);
    std::string text;
    for (const TokenSeq& seq : seqs) {
        json j;
        j["tokens"] = seq.tokens;
        j["mask"] = build_loss_mask(seq.tokens);
        if (seq.logprobs) {
            MaskedLoss loss = masked_cross_entropy(seq);
            j["masked_nll"] = loss.nll;
            j["kept"] = loss.kept;
            j["mean_nll"] = loss.mean_nll;
        } else {
            j["masked_nll"] = nullptr;
        }
        text += j.dump();
        text += '\n';
    }
    write_file_atomic(out, text);
}

void run_guard(const std::string& generations, int t_max, const std::string& out) {
    StabilityReport report = stability_report(load_generations(generations), t_max);
    json domains = json::object();
    for (const auto& [domain, d] : report.per_domain)
        domains[domain] = {
            {"pages", d.pages}, {"failures", d.failures}, {"failure_rate", d.failure_rate}};
    json j = {{"per_domain", std::move(domains)},
              {"overall_failure_rate", report.overall_failure_rate}};
    write_file_atomic(out, j.dump() + "\n");
}

json metric_report_json(const MetricReport& report) {
    json j = {{"pages", report.pages},
              {"bleu", report.bleu},
              {"precision", report.precision},
              {"recall", report.recall},
              {"f1", report.f1},
              {"edit_dist", report.edit_dist},
              {"teds", report.teds ? json(*report.teds) : json(nullptr)},
              {"teds_s", report.teds_s ? json(*report.teds_s) : json(nullptr)},
              {"reading_order_ed", report.reading_order}};
    return j;
}

void run_eval(const std::string& pred, const std::string& ref, const std::string& out,
              const std::string& per_page_csv) {
    MetricReport report = evaluate_corpus(load_eval_pairs(pred, ref));
    write_file_atomic(out, metric_report_json(report).dump() + "\n");
    if (!per_page_csv.empty()) {
        std::string csv = "page_id,bleu,f1,precision,recall,edit_dist,teds,teds_s,ro_ed\n";
        for (const PageMetrics& m : report.per_page) {
            csv += m.page_id;
            csv += ',' + fmt(m.bleu) + ',' + fmt(m.f1) + ',' + fmt(m.precision) + ',' +
                   fmt(m.recall) + ',' + fmt(m.edit_dist);
            csv += ',' + (m.teds ? fmt(*m.teds) : std::string());
            csv += ',' + (m.teds_s ? fmt(*m.teds_s) : std::string());
            csv += ',' + fmt(m.reading_order);
            csv += '\n';
        }
        write_file_atomic(per_page_csv, csv);
    }
}

void run_attn(const std::string& tensor, const std::string& out) {
    PhaseShiftResult result = phase_shift(load_attention(tensor));
    json j = {{"peak_position", result.peak_position},
              {"peak_segment", result.peak_segment},
              {"frac_struct_to_prior", result.frac_struct_to_prior},
              {"frac_content_to_image", result.frac_content_to_image},
              {"bimodality_gap", result.bimodality_gap}};
    write_file_atomic(out, j.dump() + "\n");
}

void run_mmd(const std::string& x_path, const std::string& y_path, const std::string& gamma_flag,
             const std::string& out) {
    auto xs = load_embeddings(x_path);
    auto ys = load_embeddings(y_path);
    std::optional<double> sigma;
    if (gamma_flag != "auto") {
        double gamma = 0;
        try {
            size_t used = 0;
            gamma = std::stod(gamma_flag, &used);
            if (used != gamma_flag.size() || !(gamma > 0)) throw std::invalid_argument(gamma_flag);
        } catch (const std::exception&) {
            throw FlagsError("--gamma must be \"auto\" or a positive number, got " + gamma_flag);
        }
        sigma = std::sqrt(1.0 / (2.0 * gamma));
    }
    MmdResult biased = mmd_rbf(xs, ys, true, sigma);
    json j = {{"n_x", xs.size()},
              {"n_y", ys.size()},
              {"sigma", biased.sigma},
              {"gamma", biased.gamma},
              {"mmd_biased", biased.mmd},
              {"mmd_sq_biased", biased.mmd_sq}};
    if (xs.size() >= 2 && ys.size() >= 2) {
        MmdResult unbiased = mmd_rbf(xs, ys, false, biased.sigma);
        j["mmd_unbiased"] = unbiased.mmd;
        j["mmd_sq_unbiased"] = unbiased.mmd_sq;
    } else {
        j["mmd_unbiased"] = nullptr;
        j["mmd_sq_unbiased"] = nullptr;
    }
    write_file_atomic(out, j.dump() + "\n");
}

struct MockArgs {
    std::string fixtures, prompts, degrade, out;
    uint64_t seed = 0;
};

MockDecodeConfig parse_degrade(const std::string& degrade, uint64_t seed) {
    MockDecodeConfig config;
    config.seed = seed;
    size_t begin = 0;
    while (begin < degrade.size()) {
        size_t end = degrade.find(',', begin);
        std::string part = degrade.substr(begin, end == std::string::npos ? end : end - begin);
        size_t eq = part.find('=');
        if (eq == std::string::npos)
            throw FlagsError("--degrade parts must look like miss=0.7: " + part);
        std::string key = part.substr(0, eq);
        double value = 0;
        try {
            size_t used = 0;
            value = std::stod(part.substr(eq + 1), &used);
            if (used != part.size() - eq - 1) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw FlagsError("--degrade value is not a number: " + part);
        }
        if (value < 0 || value > 1)
            throw FlagsError("--degrade probabilities must lie in [0, 1]: " + part);
        if (key == "miss")
            config.miss_rate = value;
        else if (key == "loop")
            config.loop_rate = value;
        else
            throw FlagsError("--degrade keys are miss and loop: " + part);
        if (end == std::string::npos) break;
        begin = end + 1;
    }
    return config;
}

std::vector<PriorItem> prior_items_from_block(const std::string& block,
                                              const std::string& page_id) {
    std::vector<PriorItem> items;
    DocTagsDoc doc = parse(block);
    for (const DocElement& el : doc.elements) {
        if (!el.locs)
            throw FormatError("prior item without location tokens for page " + page_id);
        items.push_back({el.tag, *el.locs});
    }
    return items;
}

void run_mock(const MockArgs& args) {
    std::vector<FixturePage> fixtures = load_fixture_dir(args.fixtures);
    MockDecodeConfig config = parse_degrade(args.degrade, args.seed);
    std::map<std::string, PromptRecord> prompts;
    for (PromptRecord& r : load_prompts(args.prompts)) prompts[r.page_id] = std::move(r);
    fs::create_directories(fs::path(args.out) / "decoded");
    std::vector<GenerationRecord> records;
    records.reserve(fixtures.size());
    for (const FixturePage& page : fixtures) {
        std::optional<std::vector<PriorItem>> prior;
        auto it = prompts.find(page.page_id);
        if (it != prompts.end() && !it->second.prior.empty())
            prior = prior_items_from_block(it->second.prior, page.page_id);
        MockDecodeResult result =
            mock_decode(page.truth, prior, config, page.page_id, page.domain);
        write_file_atomic((fs::path(args.out) / "decoded" / (page.page_id + ".doctags")).string(),
                          serialize(result.doc));
        records.push_back(std::move(result.record));
    }
    write_generations((fs::path(args.out) / "generations.jsonl").string(), std::move(records));
}

void run_overhead(const std::string& prompts_path, const std::string& out) {
    std::vector<PromptRecord> prompts = load_prompts(prompts_path);
    std::vector<int> overheads;
    overheads.reserve(prompts.size());
    for (const PromptRecord& r : prompts) overheads.push_back(r.token_overhead);
    OverheadStats stats = overhead_stats(overheads);
    json j = {{"count", overheads.size()},
              {"min", stats.min},
              {"max", stats.max},
              {"median", stats.median},
              {"mean", stats.mean}};
    write_file_atomic(out, j.dump() + "\n");
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"docpipe: deterministic tooling for layout-prior document parsing pipelines"};
    app.require_subcommand(1);

    PostprocessArgs post_args;
    CLI::App* post = app.add_subcommand(
        "postprocess", "Filter, merge, and NMS raw detector output (JSONL in, JSONL out)");
    post->add_option("--detections", post_args.detections, "input detections JSONL")->required();
    post->add_option("--out", post_args.out, "output detections JSONL")->required();
    post->add_option("--tau", post_args.config.confidence_tau,
                     "confidence threshold; keeps score > tau (default 0.6)");
    post->add_option("--iota", post_args.config.nms_iou,
                     "NMS IoU threshold; suppresses overlap > iota (default 0.5)");
    post->add_option("--merge-ios", post_args.config.merge_ios,
                     "fragment merge intersection-over-smaller threshold (default 0.8)");
    post->callback([&post_args] { run_postprocess(post_args); });

    PriorArgs prior_args;
    CLI::App* prior = app.add_subcommand(
        "prior", "Build layout-prior prompts from detections (JSONL in, prompts JSONL out)");
    prior->add_option("--detections", prior_args.detections, "input detections JSONL")->required();
    prior->add_option("--out", prior_args.out, "output prompts JSONL")->required();
    prior->add_option("--instruction", prior_args.instruction,
                      "instruction line prepended to each prompt");
    CLI::Option* perturb_opt = prior->add_option(
        "--perturb", prior_args.perturb,
        "perturbation config like ys-1.0-0.3 (shuffle-injection-dropout)");
    CLI::Option* seed_opt =
        prior->add_option("--seed", prior_args.seed, "seed for perturbation randomness");
    perturb_opt->needs(seed_opt);
    prior->add_option("--width-height-from", prior_args.dims_manifest,
                      "JSONL manifest overriding page width/height by page_id");
    prior->add_option("--tau", prior_args.config.confidence_tau,
                      "confidence threshold; keeps score > tau (default 0.6)");
    prior->add_option("--iota", prior_args.config.nms_iou,
                      "NMS IoU threshold; suppresses overlap > iota (default 0.5)");
    prior->add_option("--merge-ios", prior_args.config.merge_ios,
                      "fragment merge intersection-over-smaller threshold (default 0.8)");
    prior->callback([&prior_args] { run_prior(prior_args); });

    std::string validate_corpus;
    CLI::App* validate =
        app.add_subcommand("validate", "Parse a corpus and check byte-exact round-trips");
    validate->add_option("--doctags", validate_corpus, ".doctags directory or JSONL manifest")
        ->required();
    validate->callback([&validate_corpus] { run_validate(validate_corpus); });

    std::string mask_tokens, mask_out;
    CLI::App* mask = app.add_subcommand(
        "mask", "Emit loss masks (and masked NLL when logprobs are present) for token sequences");
    mask->add_option("--tokens", mask_tokens, "input tokens JSONL")->required();
    mask->add_option("--out", mask_out, "output JSONL with mask and masked_nll")->required();
    mask->callback([&mask_tokens, &mask_out] { run_mask(mask_tokens, mask_out); });

    std::string guard_generations, guard_out;
    int guard_t_max = kDefaultMaxTokens;
    CLI::App* guard = app.add_subcommand(
        "guard", "Report decode failure rates per domain from a generations corpus");
    guard->add_option("--generations", guard_generations, "input generations JSONL")->required();
    guard->add_option("--t-max", guard_t_max,
                      "token budget; failure means token_count > t-max without EOS (default 5000)");
    guard->add_option("--out", guard_out, "output report JSON")->required();
    guard->callback(
        [&guard_generations, &guard_t_max, &guard_out] {
            run_guard(guard_generations, guard_t_max, guard_out);
        });

    std::string eval_pred, eval_ref, eval_out, eval_csv;
    CLI::App* eval = app.add_subcommand(
        "eval", "Score predicted pages against references (BLEU, F1, edit distance, TEDS)");
    eval->add_option("--pred", eval_pred, "predicted .doctags directory or JSONL manifest")
        ->required();
    eval->add_option("--ref", eval_ref, "reference .doctags directory or JSONL manifest")
        ->required();
    eval->add_option("--out", eval_out, "output report JSON")->required();
    eval->add_option("--per-page", eval_csv, "optional per-page CSV");
    eval->callback([&eval_pred, &eval_ref, &eval_out, &eval_csv] {
        run_eval(eval_pred, eval_ref, eval_out, eval_csv);
    });

    std::string attn_tensor, attn_out;
    CLI::App* attn = app.add_subcommand(
        "attn", "Compute attention peak positions and phase-shift fractions");
    attn->add_option("--tensor", attn_tensor, "input attention tensor JSON")->required();
    attn->add_option("--out", attn_out, "output phase-shift JSON")->required();
    attn->callback([&attn_tensor, &attn_out] { run_attn(attn_tensor, attn_out); });

    std::string mmd_x, mmd_y, mmd_gamma = "auto", mmd_out;
    CLI::App* mmd = app.add_subcommand(
        "mmd", "RBF-kernel MMD between two embedding samples (CSV or JSONL)");
    mmd->add_option("--x", mmd_x, "first sample (.csv or JSONL)")->required();
    mmd->add_option("--y", mmd_y, "second sample (.csv or JSONL)")->required();
    mmd->add_option("--gamma", mmd_gamma,
                    "kernel gamma, or \"auto\" for the median heuristic (default auto)");
    mmd->add_option("--out", mmd_out, "output JSON")->required();
    mmd->callback(
        [&mmd_x, &mmd_y, &mmd_gamma, &mmd_out] { run_mmd(mmd_x, mmd_y, mmd_gamma, mmd_out); });

    MockArgs mock_args;
    CLI::App* mock = app.add_subcommand(
        "mock", "Deterministic stand-in decoder over a fixture corpus");
    mock->add_option("--fixtures", mock_args.fixtures,
                     "fixture directory with manifest.jsonl and .doctags files")
        ->required();
    mock->add_option("--prompts", mock_args.prompts, "prompts JSONL from the prior subcommand")
        ->required();
    mock->add_option("--degrade", mock_args.degrade, "degradation settings like miss=0.7,loop=0.1")
        ->required();
    mock->add_option("--seed", mock_args.seed, "seed for degradation randomness")->required();
    mock->add_option("--out", mock_args.out, "output directory (decoded/ plus generations.jsonl)")
        ->required();
    mock->callback([&mock_args] { run_mock(mock_args); });

    std::string overhead_prompts, overhead_out;
    CLI::App* overhead = app.add_subcommand(
        "overhead", "Order statistics of prompt token overhead across a prompts corpus");
    overhead->add_option("--prompts", overhead_prompts, "input prompts JSONL")->required();
    overhead->add_option("--out", overhead_out, "output stats JSON")->required();
    overhead->callback(
        [&overhead_prompts, &overhead_out] { run_overhead(overhead_prompts, overhead_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // help text on stdout, exit 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("flags", e.what());
        return 3;
    } catch (const FlagsError& e) {
        emit_error("flags", e.what());
        return 3;
    } catch (const IoError& e) {
        emit_error("io", e.what());
        return 1;
    } catch (const ParseError& e) {
        emit_error("format", e.what());
        return 2;
    } catch (const FormatError& e) {
        emit_error("format", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        emit_error("format", e.what());
        return 2;
    } catch (const std::out_of_range& e) {
        emit_error("format", e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 2;
    }
    return 0;
}

} // namespace docpipe::cli
