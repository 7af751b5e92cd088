#include "docpipe/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace docpipe {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const std::string& where) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("invalid JSON in " + where);
    return j;
}

const json& field(const json& obj, const char* name, const std::string& where) {
    auto it = obj.find(name);
    if (it == obj.end())
        throw FormatError("missing field \"" + std::string(name) + "\" in " + where);
    return *it;
}

std::string string_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_string())
        throw FormatError("field \"" + std::string(name) + "\" must be a string in " + where);
    return v.get<std::string>();
}

double number_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_number())
        throw FormatError("field \"" + std::string(name) + "\" must be a number in " + where);
    return v.get<double>();
}

long int_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_number_integer())
        throw FormatError("field \"" + std::string(name) + "\" must be an integer in " + where);
    return v.get<long>();
}

bool bool_field(const json& obj, const char* name, const std::string& where) {
    const json& v = field(obj, name, where);
    if (!v.is_boolean())
        throw FormatError("field \"" + std::string(name) + "\" must be a boolean in " + where);
    return v.get<bool>();
}

std::string line_where(const std::string& path, size_t line) {
    return path + " line " + std::to_string(line);
}

DetectionPage page_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw FormatError("expected a JSON object in " + where);
    DetectionPage page;
    page.page_id = string_field(j, "page_id", where);
    page.width = number_field(j, "width", where);
    page.height = number_field(j, "height", where);
    if (!(page.width > 0) || !(page.height > 0))
        throw FormatError("page dimensions must be positive in " + where);
    const json& dets = field(j, "detections", where);
    if (!dets.is_array()) throw FormatError("\"detections\" must be an array in " + where);
    for (const json& d : dets) {
        Detection det;
        det.cls = static_cast<int>(int_field(d, "class", where));
        if (det.cls < 0 || det.cls >= kDetectorClassCount)
            throw FormatError("detector class out of range in " + where + ": " +
                              std::to_string(det.cls));
        det.score = number_field(d, "score", where);
        if (det.score < 0 || det.score > 1)
            throw FormatError("score must lie in [0, 1] in " + where);
        const json& bbox = field(d, "bbox", where);
        if (!bbox.is_array() || bbox.size() != 4)
            throw FormatError("\"bbox\" must be an array of 4 numbers in " + where);
        for (const json& v : bbox)
            if (!v.is_number())
                throw FormatError("\"bbox\" must be an array of 4 numbers in " + where);
        det.box = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                   bbox[3].get<double>()};
        det.box.x_min = std::clamp(det.box.x_min, 0.0, page.width);
        det.box.x_max = std::clamp(det.box.x_max, 0.0, page.width);
        det.box.y_min = std::clamp(det.box.y_min, 0.0, page.height);
        det.box.y_max = std::clamp(det.box.y_max, 0.0, page.height);
        if (det.box.x_min > det.box.x_max || det.box.y_min > det.box.y_max)
            throw FormatError("bbox corners out of order in " + where);
        page.detections.push_back(det);
    }
    return page;
}

json page_to_json(const DetectionPage& page) {
    json dets = json::array();
    for (const Detection& d : page.detections) {
        dets.push_back({{"class", d.cls},
                        {"score", d.score},
                        {"bbox", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}}});
    }
    return {{"page_id", page.page_id},
            {"width", page.width},
            {"height", page.height},
            {"detections", std::move(dets)}};
}

std::vector<double> numbers_from_csv_row(const std::string& line, const std::string& where,
                                         int& label_col) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    auto as_number = [](const std::string& s, double& out) {
        try {
            size_t used = 0;
            out = std::stod(s, &used);
            while (used < s.size() && (s[used] == ' ' || s[used] == '\t')) ++used;
            return used == s.size();
        } catch (const std::exception&) {
            return false;
        }
    };
    // at most one non-numeric field, first or last, treated as the label
    std::vector<double> values;
    for (size_t i = 0; i < fields.size(); ++i) {
        double v = 0;
        if (as_number(fields[i], v)) {
            values.push_back(v);
            continue;
        }
        int col = i == 0 ? 0 : (i + 1 == fields.size() ? 1 : -1);
        if (col < 0 || (label_col >= 0 && label_col != col))
            throw FormatError("non-numeric field in " + where + ": \"" + fields[i] + "\"");
        label_col = col;
    }
    if (values.empty()) throw FormatError("no numeric fields in " + where);
    return values;
}

} // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path);
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("cannot write " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename " + tmp + " to " + path);
    }
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::string text = read_file(path);
    std::vector<json> out;
    size_t begin = 0, line_no = 0;
    while (begin <= text.size()) {
        size_t end = text.find('\n', begin);
        std::string line = text.substr(begin, end == std::string::npos ? end : end - begin);
        ++line_no;
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (!blank) out.push_back(parse_json(line, line_where(path, line_no)));
        if (end == std::string::npos) break;
        begin = end + 1;
    }
    return out;
}

std::vector<DetectionPage> load_detection_pages(const std::string& path) {
    std::vector<json> lines = read_jsonl(path);
    std::vector<DetectionPage> pages;
    pages.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i)
        pages.push_back(page_from_json(lines[i], line_where(path, i + 1)));
    return pages;
}

void write_detection_pages(const std::string& path, std::vector<DetectionPage> pages) {
    std::sort(pages.begin(), pages.end(),
              [](const DetectionPage& a, const DetectionPage& b) { return a.page_id < b.page_id; });
    std::string out;
    for (const DetectionPage& page : pages) {
        out += page_to_json(page).dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

void write_prompts(const std::string& path, std::vector<PromptRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const PromptRecord& a, const PromptRecord& b) { return a.page_id < b.page_id; });
    std::string out;
    for (const PromptRecord& r : records) {
        json j = {{"page_id", r.page_id},
                  {"instruction", r.instruction},
                  {"prior", r.prior},
                  {"token_overhead", r.token_overhead},
                  {"perturb_config", r.perturb_config ? json(*r.perturb_config) : json(nullptr)}};
        out += j.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<PromptRecord> load_prompts(const std::string& path) {
    std::vector<json> lines = read_jsonl(path);
    std::vector<PromptRecord> records;
    records.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string where = line_where(path, i + 1);
        const json& j = lines[i];
        if (!j.is_object()) throw FormatError("expected a JSON object in " + where);
        PromptRecord r;
        r.page_id = string_field(j, "page_id", where);
        r.instruction = string_field(j, "instruction", where);
        r.prior = string_field(j, "prior", where);
        r.token_overhead = static_cast<int>(int_field(j, "token_overhead", where));
        const json& pc = field(j, "perturb_config", where);
        if (pc.is_string())
            r.perturb_config = pc.get<std::string>();
        else if (!pc.is_null())
            throw FormatError("\"perturb_config\" must be a string or null in " + where);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<TokenSeq> load_token_seqs(const std::string& path) {
    std::vector<json> lines = read_jsonl(path);
    std::vector<TokenSeq> seqs;
    seqs.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string where = line_where(path, i + 1);
        const json& j = lines[i];
        if (!j.is_object()) throw FormatError("expected a JSON object in " + where);
        TokenSeq seq;
        const json& toks = field(j, "tokens", where);
        if (!toks.is_array()) throw FormatError("\"tokens\" must be an array in " + where);
        for (const json& t : toks) {
            if (!t.is_string()) throw FormatError("tokens must be strings in " + where);
            seq.tokens.push_back(t.get<std::string>());
        }
        if (auto it = j.find("logprobs"); it != j.end() && !it->is_null()) {
            if (!it->is_array()) throw FormatError("\"logprobs\" must be an array in " + where);
            std::vector<double> lp;
            for (const json& v : *it) {
                if (!v.is_number()) throw FormatError("logprobs must be numbers in " + where);
                lp.push_back(v.get<double>());
            }
            seq.logprobs = std::move(lp);
        }
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

std::vector<GenerationRecord> load_generations(const std::string& path) {
    std::vector<json> lines = read_jsonl(path);
    std::vector<GenerationRecord> records;
    records.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string where = line_where(path, i + 1);
        const json& j = lines[i];
        if (!j.is_object()) throw FormatError("expected a JSON object in " + where);
        GenerationRecord r;
        r.page_id = string_field(j, "page_id", where);
        r.domain = string_field(j, "domain", where);
        r.token_count = static_cast<int>(int_field(j, "token_count", where));
        if (r.token_count < 0) throw FormatError("token_count must be nonnegative in " + where);
        r.ended_with_eos = bool_field(j, "ended_with_eos", where);
        if (auto it = j.find("tail_tokens"); it != j.end() && !it->is_null()) {
            if (!it->is_array()) throw FormatError("\"tail_tokens\" must be an array in " + where);
            for (const json& t : *it) {
                if (!t.is_string())
                    throw FormatError("tail tokens must be strings in " + where);
                r.tail_tokens.push_back(t.get<std::string>());
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_generations(const std::string& path, std::vector<GenerationRecord> records) {
    std::sort(records.begin(), records.end(), [](const GenerationRecord& a,
                                                 const GenerationRecord& b) {
        return a.page_id < b.page_id;
    });
    std::string out;
    for (const GenerationRecord& r : records) {
        json j = {{"page_id", r.page_id},
                  {"domain", r.domain},
                  {"token_count", r.token_count},
                  {"ended_with_eos", r.ended_with_eos},
                  {"tail_tokens", r.tail_tokens}};
        out += j.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

AttentionTensor load_attention(const std::string& path) {
    json j = parse_json(read_file(path), path);
    if (!j.is_object()) throw FormatError("expected a JSON object in " + path);
    AttentionTensor attn;
    attn.layers = static_cast<int>(int_field(j, "layers", path));
    attn.heads = static_cast<int>(int_field(j, "heads", path));
    attn.seq = static_cast<int>(int_field(j, "seq", path));
    const json& segments = field(j, "segments", path);
    if (!segments.is_array()) throw FormatError("\"segments\" must be an array in " + path);
    for (const json& s : segments) {
        Segment seg;
        seg.name = string_field(s, "name", path);
        seg.begin = static_cast<int>(int_field(s, "begin", path));
        seg.end = static_cast<int>(int_field(s, "end", path));
        attn.segments.push_back(std::move(seg));
    }
    const json& kinds = field(j, "token_kinds", path);
    if (!kinds.is_array()) throw FormatError("\"token_kinds\" must be an array in " + path);
    for (const json& k : kinds) {
        if (!k.is_string()) throw FormatError("token kinds must be strings in " + path);
        attn.token_kinds.push_back(k.get<std::string>());
    }
    const json& values = field(j, "values", path);
    if (!values.is_array()) throw FormatError("\"values\" must be an array in " + path);
    attn.values.reserve(values.size());
    for (const json& v : values) {
        if (!v.is_number()) throw FormatError("attention values must be numbers in " + path);
        attn.values.push_back(v.get<double>());
    }
    return attn;
}

std::vector<std::vector<double>> load_embeddings(const std::string& path) {
    std::vector<std::vector<double>> points;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
        std::string text = read_file(path);
        std::istringstream ss(text);
        std::string line;
        size_t line_no = 0;
        int label_col = -1;
        while (std::getline(ss, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            points.push_back(numbers_from_csv_row(line, line_where(path, line_no), label_col));
        }
    } else {
        std::vector<json> lines = read_jsonl(path);
        for (size_t i = 0; i < lines.size(); ++i) {
            std::string where = line_where(path, i + 1);
            const json* arr = &lines[i];
            if (lines[i].is_object()) arr = &field(lines[i], "embedding", where);
            if (!arr->is_array())
                throw FormatError("expected an array of numbers in " + where);
            std::vector<double> row;
            for (const json& v : *arr) {
                if (!v.is_number()) throw FormatError("embedding values must be numbers in " + where);
                row.push_back(v.get<double>());
            }
            points.push_back(std::move(row));
        }
    }
    if (points.empty()) throw FormatError("no embedding rows in " + path);
    for (const auto& p : points)
        if (p.size() != points.front().size())
            throw FormatError("embedding rows have inconsistent dimensions in " + path);
    return points;
}

std::vector<FixturePage> load_fixture_dir(const std::string& dir) {
    fs::path root(dir);
    if (!fs::is_directory(root)) throw IoError("not a directory: " + dir);
    std::string manifest = (root / "manifest.jsonl").string();
    std::vector<json> lines = read_jsonl(manifest);
    std::vector<FixturePage> pages;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string where = line_where(manifest, i + 1);
        const json& j = lines[i];
        FixturePage page;
        page.page_id = string_field(j, "page_id", where);
        page.domain = string_field(j, "domain", where);
        std::string file = page.page_id + ".doctags";
        if (auto it = j.find("file"); it != j.end()) {
            if (!it->is_string()) throw FormatError("\"file\" must be a string in " + where);
            file = it->get<std::string>();
        }
        page.truth = parse(read_file((root / file).string()));
        pages.push_back(std::move(page));
    }
    std::sort(pages.begin(), pages.end(),
              [](const FixturePage& a, const FixturePage& b) { return a.page_id < b.page_id; });
    return pages;
}

std::vector<std::pair<std::string, std::string>> load_doctags_corpus(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> pages;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".doctags") continue;
            pages.emplace_back(entry.path().stem().string(), read_file(entry.path().string()));
        }
    } else {
        std::vector<json> lines = read_jsonl(path);
        for (size_t i = 0; i < lines.size(); ++i) {
            std::string where = line_where(path, i + 1);
            pages.emplace_back(string_field(lines[i], "page_id", where),
                               string_field(lines[i], "doctags", where));
        }
    }
    std::sort(pages.begin(), pages.end());
    return pages;
}

std::vector<PagePair> load_eval_pairs(const std::string& pred_path, const std::string& ref_path) {
    auto preds = load_doctags_corpus(pred_path);
    auto refs = load_doctags_corpus(ref_path);
    if (preds.size() != refs.size())
        throw FormatError("prediction and reference corpora have different page counts (" +
                          std::to_string(preds.size()) + " vs " + std::to_string(refs.size()) +
                          ")");
    std::vector<PagePair> pairs;
    pairs.reserve(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].first != refs[i].first)
            throw FormatError("page id mismatch between corpora: " + preds[i].first + " vs " +
                              refs[i].first);
        PagePair pair;
        pair.page_id = preds[i].first;
        pair.pred = parse(preds[i].second);
        pair.ref = parse(refs[i].second);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

} // namespace docpipe
