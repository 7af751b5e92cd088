#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "docpipe/cli.hpp"
#include "docpipe/io.hpp"
#include "docpipe/prior.hpp"
#include "golden.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "docpipe");
    std::vector<char*> argv;
    argv.reserve(args.size());
    for (std::string& a : args) argv.push_back(a.data());
    return docpipe::cli::run(static_cast<int>(argv.size()), argv.data());
}

// swaps a stream buffer for the capture's lifetime; keep the scope tight so
// assertion output is not swallowed
struct CaptureStream {
    std::ostream& stream;
    std::ostringstream buffer;
    std::streambuf* saved;
    explicit CaptureStream(std::ostream& s) : stream(s), saved(s.rdbuf(buffer.rdbuf())) {}
    ~CaptureStream() { stream.rdbuf(saved); }
    std::string text() const { return buffer.str(); }
};

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name)
        : dir(fs::temp_directory_path() / ("docpipe_test_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
    void write(const std::string& leaf, const std::string& content) const {
        std::ofstream out(dir / leaf, std::ios::binary);
        out << content;
    }
};

// run a subcommand expecting a failure; returns the exit code and checks the
// stderr diagnostic is a single JSON line with the given kind
int run_expecting_error(std::vector<std::string> args, const std::string& kind) {
    std::string err_text;
    int code = 0;
    {
        CaptureStream cap(std::cerr);
        code = run_cli(std::move(args));
        err_text = cap.text();
    }
    json err = json::parse(err_text, nullptr, false);
    CHECK_FALSE(err.is_discarded());
    CHECK(err["kind"] == kind);
    CHECK(err["error"].is_string());
    return code;
}

} // namespace

TEST_CASE("atomic writes land complete and leave no temp file") {
    Scratch s("atomic");
    std::string p = s.path("out.txt");
    docpipe::write_file_atomic(p, "hello\n");
    CHECK(docpipe::read_file(p) == "hello\n");
    CHECK_FALSE(fs::exists(p + ".tmp"));
    docpipe::write_file_atomic(p, "rewritten");
    CHECK(docpipe::read_file(p) == "rewritten");
    CHECK_THROWS_AS(docpipe::read_file(s.path("absent.txt")), docpipe::IoError);
}

TEST_CASE("jsonl reader skips blank lines and reports the failing line") {
    Scratch s("jsonl");
    s.write("mixed.jsonl", "\n{\"a\":1}\n   \n{\"b\":2}\n");
    CHECK(docpipe::read_jsonl(s.path("mixed.jsonl")).size() == 2);
    s.write("bad.jsonl", "{\"ok\":1}\nnot json\n");
    try {
        docpipe::read_jsonl(s.path("bad.jsonl"));
        FAIL("expected a FormatError");
    } catch (const docpipe::FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("detection pages load with clamping and schema validation") {
    Scratch s("detload");
    json page = {{"page_id", "p1"},
                 {"width", 100.0},
                 {"height", 50.0},
                 {"detections",
                  json::array({{{"class", 9}, {"score", 0.9}, {"bbox", {-5.0, 10.0, 120.0, 60.0}}}})}};
    s.write("d.jsonl", page.dump() + "\n");
    auto pages = docpipe::load_detection_pages(s.path("d.jsonl"));
    REQUIRE(pages.size() == 1);
    REQUIRE(pages[0].detections.size() == 1);
    const docpipe::BBox& b = pages[0].detections[0].box;
    CHECK(b.x_min == 0.0);
    CHECK(b.y_min == 10.0);
    CHECK(b.x_max == 100.0); // clamped to the page
    CHECK(b.y_max == 50.0);

    auto reject = [&](json broken) {
        s.write("bad.jsonl", broken.dump() + "\n");
        CHECK_THROWS_AS(docpipe::load_detection_pages(s.path("bad.jsonl")), docpipe::FormatError);
    };
    json bad = page;
    bad["detections"][0]["bbox"] = {50.0, 10.0, 20.0, 30.0}; // inverted even after clamping
    reject(bad);
    bad = page;
    bad["detections"][0]["class"] = 17;
    reject(bad);
    bad = page;
    bad["detections"][0]["score"] = 1.5;
    reject(bad);
    bad = page;
    bad.erase("page_id");
    reject(bad);
    bad = page;
    bad["width"] = 0.0;
    reject(bad);
}

TEST_CASE("detection pages round-trip and come back sorted") {
    Scratch s("detrt");
    docpipe::DetectionPage z;
    z.page_id = "z-page";
    z.width = 10;
    z.height = 10;
    z.detections.push_back({3, 0.75, {1, 2, 3, 4}});
    docpipe::DetectionPage a;
    a.page_id = "a-page";
    a.width = 20;
    a.height = 20;
    docpipe::write_detection_pages(s.path("d.jsonl"), {z, a});
    auto pages = docpipe::load_detection_pages(s.path("d.jsonl"));
    REQUIRE(pages.size() == 2);
    CHECK(pages[0].page_id == "a-page");
    CHECK(pages[1].page_id == "z-page");
    CHECK(pages[1].detections[0].cls == 3);
    CHECK(pages[1].detections[0].score == 0.75);
    CHECK(pages[1].detections[0].box.y_max == 4.0);
}

TEST_CASE("prompt records round-trip including the null perturb config") {
    Scratch s("promptrt");
    docpipe::PromptRecord with;
    with.page_id = "b";
    with.instruction = "Convert this page to Docling:";
    with.prior = "<layout>\n</layout>";
    with.token_overhead = 2;
    with.perturb_config = "ys-1.0-0.3";
    docpipe::PromptRecord without;
    without.page_id = "a";
    without.instruction = "Convert this page to Docling:";
    without.prior = "";
    without.token_overhead = 0;
    docpipe::write_prompts(s.path("p.jsonl"), {with, without});
    auto records = docpipe::load_prompts(s.path("p.jsonl"));
    REQUIRE(records.size() == 2);
    CHECK(records[0].page_id == "a"); // sorted on write
    CHECK_FALSE(records[0].perturb_config.has_value());
    CHECK(records[1].prior == "<layout>\n</layout>");
    CHECK(records[1].token_overhead == 2);
    REQUIRE(records[1].perturb_config.has_value());
    CHECK(*records[1].perturb_config == "ys-1.0-0.3");
}

TEST_CASE("generation records round-trip and the tail is optional on load") {
    Scratch s("genrt");
    docpipe::GenerationRecord r;
    r.page_id = "g1";
    r.domain = "arxiv";
    r.token_count = 123;
    r.ended_with_eos = true;
    r.tail_tokens = {"x", "y"};
    docpipe::write_generations(s.path("g.jsonl"), {r});
    auto loaded = docpipe::load_generations(s.path("g.jsonl"));
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].domain == "arxiv");
    CHECK(loaded[0].tail_tokens == std::vector<std::string>{"x", "y"});

    s.write("no_tail.jsonl",
            R"({"page_id":"g2","domain":"d","token_count":5,"ended_with_eos":false})"
            "\n");
    auto bare = docpipe::load_generations(s.path("no_tail.jsonl"));
    REQUIRE(bare.size() == 1);
    CHECK(bare[0].tail_tokens.empty());
    CHECK_FALSE(bare[0].ended_with_eos);
}

TEST_CASE("embeddings load from csv with an optional label column or from jsonl") {
    Scratch s("emb");
    s.write("first.csv", "p1,1.0,2.0\np2,3.0,4.0\n");
    auto pts = docpipe::load_embeddings(s.path("first.csv"));
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == std::vector<double>{1.0, 2.0});
    CHECK(pts[1] == std::vector<double>{3.0, 4.0});

    s.write("last.csv", "1.5,2.5,p1\n3.5,4.5,p2\n");
    pts = docpipe::load_embeddings(s.path("last.csv"));
    CHECK(pts[1] == std::vector<double>{3.5, 4.5});

    s.write("plain.csv", "1.0,2.0\r\n3.0,4.0\n");
    pts = docpipe::load_embeddings(s.path("plain.csv"));
    CHECK(pts[0] == std::vector<double>{1.0, 2.0});

    s.write("rows.jsonl", "[1.0,2.0]\n{\"embedding\":[3.0,4.0]}\n");
    pts = docpipe::load_embeddings(s.path("rows.jsonl"));
    REQUIRE(pts.size() == 2);
    CHECK(pts[1] == std::vector<double>{3.0, 4.0});

    s.write("ragged.csv", "1.0,2.0\n3.0\n");
    CHECK_THROWS_AS(docpipe::load_embeddings(s.path("ragged.csv")), docpipe::FormatError);
    s.write("moving_label.csv", "p1,1.0,2.0\n1.0,2.0,p2\n");
    CHECK_THROWS_AS(docpipe::load_embeddings(s.path("moving_label.csv")), docpipe::FormatError);
    s.write("empty.csv", "");
    CHECK_THROWS_AS(docpipe::load_embeddings(s.path("empty.csv")), docpipe::FormatError);
}

TEST_CASE("doctags corpora load from directories or manifests and eval pairs align") {
    Scratch s("corpus");
    s.write("b.doctags", "<text><loc_1><loc_2><loc_3><loc_4>bee</text>");
    s.write("a.doctags", "<text><loc_1><loc_2><loc_3><loc_4>ay</text>");
    auto pages = docpipe::load_doctags_corpus(s.dir.string());
    REQUIRE(pages.size() == 2);
    CHECK(pages[0].first == "a"); // sorted by stem
    CHECK(pages[1].second.find("bee") != std::string::npos);

    Scratch other("corpus_other");
    other.write("manifest.jsonl",
                R"({"page_id":"a","doctags":"<text><loc_1><loc_2><loc_3><loc_4>ay</text>"})"
                "\n"
                R"({"page_id":"b","doctags":"<text><loc_1><loc_2><loc_3><loc_4>bzz</text>"})"
                "\n");
    auto pairs = docpipe::load_eval_pairs(s.dir.string(), other.path("manifest.jsonl"));
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].page_id == "a");
    CHECK(pairs[1].ref.elements[0].content == "bzz");

    Scratch mism("corpus_mismatch");
    mism.write("c.doctags", "<text><loc_1><loc_2><loc_3><loc_4>sea</text>");
    CHECK_THROWS_AS(docpipe::load_eval_pairs(s.dir.string(), mism.dir.string()),
                    docpipe::FormatError);
}

TEST_CASE("fixture directories need a manifest and readable pages") {
    Scratch s("fixtures");
    s.write("m1.doctags", "<text><loc_1><loc_2><loc_3><loc_4>one</text>");
    s.write("pic.doctags", "<picture><loc_0><loc_0><loc_9><loc_9></picture>");
    s.write("manifest.jsonl",
            R"({"page_id":"m2","domain":"slides","file":"pic.doctags"})"
            "\n"
            R"({"page_id":"m1","domain":"arxiv"})"
            "\n");
    auto fixtures = docpipe::load_fixture_dir(s.dir.string());
    REQUIRE(fixtures.size() == 2);
    CHECK(fixtures[0].page_id == "m1"); // sorted
    CHECK(fixtures[0].domain == "arxiv");
    CHECK(fixtures[1].truth.elements[0].tag == docpipe::LayoutTag::picture);
    CHECK_THROWS_AS(docpipe::load_fixture_dir(s.path("nope")), docpipe::IoError);
}

TEST_CASE("cli postprocess filters and writes deterministic sorted output") {
    Scratch s("cli_post");
    json pz = {{"page_id", "z"},
               {"width", 100.0},
               {"height", 100.0},
               {"detections",
                json::array({{{"class", 9}, {"score", 0.9}, {"bbox", {0.0, 0.0, 50.0, 10.0}}},
                             {{"class", 9}, {"score", 0.55}, {"bbox", {60.0, 60.0, 90.0, 90.0}}}})}};
    json pa = {{"page_id", "a"},
               {"width", 100.0},
               {"height", 100.0},
               {"detections", json::array()}};
    s.write("in.jsonl", pz.dump() + "\n" + pa.dump() + "\n");
    CHECK(run_cli({"postprocess", "--detections", s.path("in.jsonl"), "--out",
                   s.path("out.jsonl")}) == 0);
    auto pages = docpipe::load_detection_pages(s.path("out.jsonl"));
    REQUIRE(pages.size() == 2);
    CHECK(pages[0].page_id == "a");
    REQUIRE(pages[1].detections.size() == 1); // the 0.55 detection fell below tau
    CHECK(pages[1].detections[0].score == 0.9);

    // a relaxed threshold keeps it
    CHECK(run_cli({"postprocess", "--detections", s.path("in.jsonl"), "--out",
                   s.path("out_relaxed.jsonl"), "--tau", "0.5"}) == 0);
    CHECK(docpipe::load_detection_pages(s.path("out_relaxed.jsonl"))[1].detections.size() == 2);

    // rerunning produces identical bytes
    CHECK(run_cli({"postprocess", "--detections", s.path("in.jsonl"), "--out",
                   s.path("out2.jsonl")}) == 0);
    CHECK(docpipe::read_file(s.path("out.jsonl")) == docpipe::read_file(s.path("out2.jsonl")));
    for (const auto& entry : fs::directory_iterator(s.dir))
        CHECK(entry.path().extension() != ".tmp");
}

TEST_CASE("cli prior assembles the reference article prompt") {
    Scratch s("cli_prior");
    s.write("det.jsonl", testsupport::article_detections_jsonl());
    CHECK(run_cli({"prior", "--detections", s.path("det.jsonl"), "--out",
                   s.path("prompts.jsonl")}) == 0);
    auto prompts = docpipe::load_prompts(s.path("prompts.jsonl"));
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0].page_id == "article-01");
    CHECK(docpipe::full_prompt(prompts[0]) == testsupport::kArticlePrompt);
    CHECK(prompts[0].token_overhead == 62);
    CHECK_FALSE(prompts[0].perturb_config.has_value());

    CHECK(run_cli({"prior", "--detections", s.path("det.jsonl"), "--out",
                   s.path("prompts2.jsonl")}) == 0);
    CHECK(docpipe::read_file(s.path("prompts.jsonl")) ==
          docpipe::read_file(s.path("prompts2.jsonl")));
}

TEST_CASE("cli prior applies perturbations and page dimension overrides") {
    Scratch s("cli_prior_opts");
    s.write("det.jsonl", testsupport::article_detections_jsonl());

    // full dropout empties the prior but keeps the record
    CHECK(run_cli({"prior", "--detections", s.path("det.jsonl"), "--out", s.path("dropped.jsonl"),
                   "--perturb", "ys-1.0-1.0", "--seed", "7"}) == 0);
    auto dropped = docpipe::load_prompts(s.path("dropped.jsonl"));
    REQUIRE(dropped.size() == 1);
    CHECK(dropped[0].prior == "<layout>\n</layout>");
    REQUIRE(dropped[0].perturb_config.has_value());
    CHECK(*dropped[0].perturb_config == "ys-1.0-1.0");

    // a skipped injection leaves the bare instruction
    CHECK(run_cli({"prior", "--detections", s.path("det.jsonl"), "--out", s.path("skipped.jsonl"),
                   "--perturb", "ns-0.0-0.0", "--seed", "7"}) == 0);
    auto skipped = docpipe::load_prompts(s.path("skipped.jsonl"));
    CHECK(skipped[0].prior.empty());
    CHECK(skipped[0].token_overhead == 0);
    CHECK(docpipe::full_prompt(skipped[0]) == "Convert this page to Docling:");

    // dimension override rescales the quantization grid
    json det = {{"page_id", "wh-1"},
                {"width", 1000.0},
                {"height", 1000.0},
                {"detections",
                 json::array({{{"class", 9}, {"score", 0.9}, {"bbox", {200.0, 200.0, 400.0, 400.0}}}})}};
    s.write("wh.jsonl", det.dump() + "\n");
    CHECK(run_cli({"prior", "--detections", s.path("wh.jsonl"), "--out", s.path("wh_out.jsonl")}) ==
          0);
    CHECK(docpipe::load_prompts(s.path("wh_out.jsonl"))[0].prior.find(
              "<loc_100><loc_100><loc_200><loc_200>") != std::string::npos);
    s.write("dims.jsonl", R"({"page_id":"wh-1","width":500,"height":500})" "\n");
    CHECK(run_cli({"prior", "--detections", s.path("wh.jsonl"), "--out", s.path("wh_over.jsonl"),
                   "--width-height-from", s.path("dims.jsonl")}) == 0);
    CHECK(docpipe::load_prompts(s.path("wh_over.jsonl"))[0].prior.find(
              "<loc_200><loc_200><loc_400><loc_400>") != std::string::npos);

    // a page missing from the override manifest is a format problem
    s.write("dims_wrong.jsonl", R"({"page_id":"other","width":500,"height":500})" "\n");
    CHECK(run_expecting_error({"prior", "--detections", s.path("wh.jsonl"), "--out",
                               s.path("wh_bad.jsonl"), "--width-height-from",
                               s.path("dims_wrong.jsonl")},
                              "format") == 2);
}

TEST_CASE("cli prior rejects bad perturbation flags") {
    Scratch s("cli_prior_flags");
    s.write("det.jsonl", testsupport::article_detections_jsonl());
    CHECK(run_expecting_error({"prior", "--detections", s.path("det.jsonl"), "--out",
                               s.path("p.jsonl"), "--perturb", "xs-1.0-0.0", "--seed", "1"},
                              "flags") == 3);
    // --perturb without --seed is refused up front
    CHECK(run_expecting_error({"prior", "--detections", s.path("det.jsonl"), "--out",
                               s.path("p.jsonl"), "--perturb", "ys-1.0-0.3"},
                              "flags") == 3);
}

TEST_CASE("cli validate counts pages and rejects broken markup") {
    Scratch s("cli_validate");
    s.write("a.doctags", "<text><loc_1><loc_2><loc_3><loc_4>hi</text>");
    s.write("b.doctags", "<layout><picture><loc_0><loc_0><loc_10><loc_10></picture></layout>");
    std::string out_text;
    int code = 0;
    {
        CaptureStream cap(std::cout);
        code = run_cli({"validate", "--doctags", s.dir.string()});
        out_text = cap.text();
    }
    CHECK(code == 0);
    json j = json::parse(out_text);
    CHECK(j["pages"] == 2);
    CHECK(j["ok"] == true);

    Scratch bad("cli_validate_bad");
    bad.write("x.doctags", "<text>unclosed");
    CHECK(run_expecting_error({"validate", "--doctags", bad.dir.string()}, "format") == 2);
}

TEST_CASE("cli mask writes masks and masked nll when logprobs are present") {
    Scratch s("cli_mask");
    json with = {{"tokens", {"<text>", "<loc_1>", "<loc_2>", "<loc_3>", "<loc_4>", "</text>"}},
                 {"logprobs", {-0.5, -99.0, -99.0, -99.0, -99.0, -1.5}}};
    json without = {{"tokens", {"hello"}}};
    s.write("t.jsonl", with.dump() + "\n" + without.dump() + "\n");
    CHECK(run_cli({"mask", "--tokens", s.path("t.jsonl"), "--out", s.path("m.jsonl")}) == 0);
    auto lines = docpipe::read_jsonl(s.path("m.jsonl"));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0]["mask"] == json::array({1, 0, 0, 0, 0, 1}));
    CHECK(lines[0]["masked_nll"] == 2.0); // 0.5 + 1.5, the loc positions do not count
    CHECK(lines[0]["kept"] == 2);
    CHECK(lines[0]["mean_nll"] == 1.0);
    CHECK(lines[1]["mask"] == json::array({1}));
    CHECK(lines[1]["masked_nll"].is_null());
    CHECK_FALSE(lines[1].contains("kept"));
}

TEST_CASE("cli guard aggregates failure rates per domain") {
    Scratch s("cli_guard");
    s.write("g.jsonl",
            R"({"page_id":"a","domain":"dom1","token_count":6000,"ended_with_eos":false})"
            "\n"
            R"({"page_id":"b","domain":"dom1","token_count":100,"ended_with_eos":true})"
            "\n"
            R"({"page_id":"c","domain":"dom2","token_count":100,"ended_with_eos":true})"
            "\n"
            R"({"page_id":"d","domain":"dom2","token_count":7000,"ended_with_eos":true})"
            "\n");
    CHECK(run_cli({"guard", "--generations", s.path("g.jsonl"), "--out", s.path("r.json")}) == 0);
    json r = json::parse(docpipe::read_file(s.path("r.json")));
    CHECK(r["per_domain"]["dom1"]["pages"] == 2);
    CHECK(r["per_domain"]["dom1"]["failures"] == 1);
    CHECK(r["per_domain"]["dom1"]["failure_rate"] == 0.5);
    CHECK(r["per_domain"]["dom2"]["failures"] == 0); // eos rescues the long page
    CHECK(r["overall_failure_rate"] == 0.25);

    // a generous budget clears everything
    CHECK(run_cli({"guard", "--generations", s.path("g.jsonl"), "--t-max", "8000", "--out",
                   s.path("r2.json")}) == 0);
    CHECK(json::parse(docpipe::read_file(s.path("r2.json")))["overall_failure_rate"] == 0.0);
}

TEST_CASE("cli eval scores identical corpora perfectly and emits the per-page csv") {
    Scratch pred("cli_eval_pred");
    Scratch ref("cli_eval_ref");
    const char* plain = "<text><loc_10><loc_10><loc_100><loc_20>hello world</text>";
    const char* table = "<otsl><loc_0><loc_0><loc_100><loc_100><fcel>a<fcel>b<nl></otsl>";
    pred.write("plain.doctags", plain);
    pred.write("table.doctags", table);
    ref.write("plain.doctags", plain);
    ref.write("table.doctags", table);
    Scratch out("cli_eval_out");
    CHECK(run_cli({"eval", "--pred", pred.dir.string(), "--ref", ref.dir.string(), "--out",
                   out.path("report.json"), "--per-page", out.path("pages.csv")}) == 0);
    json r = json::parse(docpipe::read_file(out.path("report.json")));
    CHECK(r["pages"] == 2);
    CHECK(r["bleu"] == 1.0);
    CHECK(r["f1"] == 1.0);
    CHECK(r["edit_dist"] == 0.0);
    CHECK(r["teds"] == 1.0);
    CHECK(r["teds_s"] == 1.0);
    CHECK(r["reading_order_ed"] == 0.0);

    std::string csv = docpipe::read_file(out.path("pages.csv"));
    std::istringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "page_id,bleu,f1,precision,recall,edit_dist,teds,teds_s,ro_ed");
    std::getline(ss, line);
    CHECK(line == "plain,1.0,1.0,1.0,1.0,0.0,,,0.0"); // no tables, so no teds cells
    std::getline(ss, line);
    CHECK(line == "table,1.0,1.0,1.0,1.0,0.0,1.0,1.0,0.0");

    CHECK(run_cli({"eval", "--pred", pred.dir.string(), "--ref", ref.dir.string(), "--out",
                   out.path("report2.json")}) == 0);
    CHECK(docpipe::read_file(out.path("report.json")) ==
          docpipe::read_file(out.path("report2.json")));
}

TEST_CASE("cli attn reports peaks and phase-shift fractions") {
    Scratch s("cli_attn");
    // seq 6: two image keys, two prior keys, two generated queries; the
    // struct query peaks in the prior and the content query in the patches
    json values = json::array();
    auto push_row = [&values](std::vector<double> row) {
        for (double v : row) values.push_back(v);
    };
    double u = 1.0 / 6.0;
    for (int q = 0; q < 4; ++q) push_row({u, u, u, u, u, u});
    push_row({0, 0, 1.0, 0, 0, 0});
    push_row({1.0, 0, 0, 0, 0, 0});
    json tensor = {{"layers", 1},
                   {"heads", 1},
                   {"seq", 6},
                   {"segments",
                    json::array({{{"name", "image_patches"}, {"begin", 0}, {"end", 2}},
                                 {{"name", "layout_prior"}, {"begin", 2}, {"end", 4}},
                                 {{"name", "generated"}, {"begin", 4}, {"end", 6}}})},
                   {"token_kinds", {"other", "other", "other", "other", "struct", "content"}},
                   {"values", std::move(values)}};
    s.write("attn.json", tensor.dump());
    CHECK(run_cli({"attn", "--tensor", s.path("attn.json"), "--out", s.path("phase.json")}) == 0);
    json r = json::parse(docpipe::read_file(s.path("phase.json")));
    CHECK(r["peak_position"] == json::array({2, 0}));
    CHECK(r["peak_segment"] == json::array({"layout_prior", "image_patches"}));
    CHECK(r["frac_struct_to_prior"] == 1.0);
    CHECK(r["frac_content_to_image"] == 1.0);
    CHECK(r["bimodality_gap"] == 1.0);

    // tensors that fail validation surface as format errors
    tensor["values"][0] = 0.9;
    s.write("broken.json", tensor.dump());
    CHECK(run_expecting_error({"attn", "--tensor", s.path("broken.json"), "--out",
                               s.path("phase2.json")},
                              "format") == 2);
}

TEST_CASE("cli mmd supports explicit gamma and the median heuristic") {
    Scratch s("cli_mmd");
    s.write("x.csv", "0.0,0.0\n");
    s.write("y.csv", "1.0,1.0\n");
    CHECK(run_cli({"mmd", "--x", s.path("x.csv"), "--y", s.path("y.csv"), "--gamma", "0.5",
                   "--out", s.path("r.json")}) == 0);
    json r = json::parse(docpipe::read_file(s.path("r.json")));
    CHECK(r["n_x"] == 1);
    CHECK(r["sigma"] == 1.0);
    CHECK(r["gamma"] == 0.5);
    CHECK(r["mmd_sq_biased"].get<double>() ==
          doctest::Approx(1.2642411176571153).epsilon(1e-12));
    CHECK(r["mmd_unbiased"].is_null()); // single points cannot feed it

    s.write("xs.csv", "0.0,0.0\n1.0,1.0\n2.0,0.0\n");
    s.write("ys.csv", "4.0,4.0\n5.0,5.0\n");
    CHECK(run_cli({"mmd", "--x", s.path("xs.csv"), "--y", s.path("ys.csv"), "--out",
                   s.path("auto.json")}) == 0);
    json a = json::parse(docpipe::read_file(s.path("auto.json")));
    double sigma = docpipe::median_heuristic_sigma(docpipe::load_embeddings(s.path("xs.csv")),
                                                   docpipe::load_embeddings(s.path("ys.csv")));
    CHECK(a["sigma"].get<double>() == doctest::Approx(sigma));
    CHECK(a["mmd_unbiased"].is_number());
    CHECK(a["mmd_biased"].get<double>() > 0.0);

    CHECK(run_expecting_error({"mmd", "--x", s.path("x.csv"), "--y", s.path("y.csv"), "--gamma",
                               "-1", "--out", s.path("bad.json")},
                              "flags") == 3);
    CHECK(run_expecting_error({"mmd", "--x", s.path("x.csv"), "--y", s.path("y.csv"), "--gamma",
                               "fast", "--out", s.path("bad.json")},
                              "flags") == 3);
}

TEST_CASE("cli mock decodes fixtures against their prompts") {
    Scratch s("cli_mock");
    const std::string m1_text = "<text><loc_10><loc_10><loc_100><loc_20>alpha</text>";
    const std::string m2_text = "<picture><loc_5><loc_5><loc_50><loc_50></picture>";
    s.write("m1.doctags", m1_text);
    s.write("alt.doctags", m2_text);
    s.write("manifest.jsonl",
            R"({"page_id":"m1","domain":"arxiv"})"
            "\n"
            R"({"page_id":"m2","domain":"arxiv","file":"alt.doctags"})"
            "\n");
    json p1 = {{"page_id", "m1"},
               {"instruction", "Convert this page to Docling:"},
               {"prior", "<layout>\n<text><loc_10><loc_10><loc_100><loc_20></text>\n</layout>"},
               {"token_overhead", 8},
               {"perturb_config", nullptr}};
    json p2 = {{"page_id", "m2"},
               {"instruction", "Convert this page to Docling:"},
               {"prior", ""},
               {"token_overhead", 0},
               {"perturb_config", "ns-0.0-0.0"}};
    s.write("prompts.jsonl", p1.dump() + "\n" + p2.dump() + "\n");

    std::string out = s.path("run1");
    CHECK(run_cli({"mock", "--fixtures", s.dir.string(), "--prompts", s.path("prompts.jsonl"),
                   "--degrade", "miss=1.0,loop=0.0", "--seed", "9", "--out", out}) == 0);
    // the vouched-for page survives in full, the priorless one loses everything
    CHECK(docpipe::read_file(out + "/decoded/m1.doctags") == m1_text);
    CHECK(docpipe::read_file(out + "/decoded/m2.doctags").empty());
    auto records = docpipe::load_generations(out + "/generations.jsonl");
    REQUIRE(records.size() == 2);
    CHECK(records[0].page_id == "m1");
    CHECK(records[0].ended_with_eos);
    CHECK(records[1].token_count == 0);

    // guaranteed loops hit only the priorless page
    std::string out2 = s.path("run2");
    CHECK(run_cli({"mock", "--fixtures", s.dir.string(), "--prompts", s.path("prompts.jsonl"),
                   "--degrade", "miss=0.0,loop=1.0", "--seed", "9", "--out", out2}) == 0);
    auto looped = docpipe::load_generations(out2 + "/generations.jsonl");
    CHECK(looped[0].ended_with_eos);
    CHECK_FALSE(looped[1].ended_with_eos);
    CHECK(looped[1].token_count == 12000);
    CHECK(looped[1].tail_tokens.size() == 512);

    CHECK(run_expecting_error({"mock", "--fixtures", s.dir.string(), "--prompts",
                               s.path("prompts.jsonl"), "--degrade", "miss=2.0", "--seed", "1",
                               "--out", s.path("run3")},
                              "flags") == 3);
    CHECK(run_expecting_error({"mock", "--fixtures", s.dir.string(), "--prompts",
                               s.path("prompts.jsonl"), "--degrade", "speed=0.5", "--seed", "1",
                               "--out", s.path("run4")},
                              "flags") == 3);
}

TEST_CASE("cli overhead reports order statistics of prompt cost") {
    Scratch s("cli_overhead");
    std::vector<docpipe::PromptRecord> prompts(5);
    const int overheads[] = {62, 0, 74, 26, 38};
    for (size_t i = 0; i < prompts.size(); ++i) {
        prompts[i].page_id = "p" + std::to_string(i);
        prompts[i].instruction = "Convert this page to Docling:";
        prompts[i].token_overhead = overheads[i];
    }
    docpipe::write_prompts(s.path("p.jsonl"), std::move(prompts));
    CHECK(run_cli({"overhead", "--prompts", s.path("p.jsonl"), "--out", s.path("o.json")}) == 0);
    json o = json::parse(docpipe::read_file(s.path("o.json")));
    CHECK(o["count"] == 5);
    CHECK(o["min"] == 0);
    CHECK(o["max"] == 74);
    CHECK(o["median"] == 38.0);
    CHECK(o["mean"] == 40.0);

    s.write("empty.jsonl", "");
    CHECK(run_expecting_error({"overhead", "--prompts", s.path("empty.jsonl"), "--out",
                               s.path("o2.json")},
                              "format") == 2);
}

TEST_CASE("cli exit codes separate io, format, and flag problems") {
    Scratch s("cli_codes");
    CHECK(run_expecting_error({"postprocess", "--detections", s.path("absent.jsonl"), "--out",
                               s.path("out.jsonl")},
                              "io") == 1);
    s.write("broken.jsonl", "{oops\n");
    CHECK(run_expecting_error({"postprocess", "--detections", s.path("broken.jsonl"), "--out",
                               s.path("out.jsonl")},
                              "format") == 2);
    CHECK(run_expecting_error({"postprocess", "--bogus"}, "flags") == 3);
    CHECK(run_expecting_error({"postprocess"}, "flags") == 3);
    CHECK(run_expecting_error({"frobnicate"}, "flags") == 3);
    CHECK(run_expecting_error({}, "flags") == 3);

    std::string help_text;
    int code = 0;
    {
        CaptureStream cap(std::cout);
        code = run_cli({"--help"});
        help_text = cap.text();
    }
    CHECK(code == 0);
    CHECK(help_text.find("docpipe") != std::string::npos);
    {
        CaptureStream cap(std::cout);
        code = run_cli({"prior", "--help"});
        help_text = cap.text();
    }
    CHECK(code == 0);
    CHECK(help_text.find("--perturb") != std::string::npos);
}
