#include "docpipe/doctags.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <charconv>

namespace docpipe {

namespace {

constexpr std::array<std::string_view, kLayoutTagCount> kTagNames = {
    "page_header",
    "section_header",
    "unordered_list",
    "ordered_list",
    "list_item",
    "text",
    "otsl",
    "picture",
    "page_break",
    "formula",
    "code",
    "page_footer",
    "caption",
    "footnote",
    "title",
    "document_index",
    "checkbox_selected",
    "checkbox_unselected",
    "form",
    "key_value_region",
};

constexpr std::array<std::string_view, 5> kCellNames = {"fcel", "ecel", "lcel", "ucel", "nl"};

bool is_ws(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool all_ws(std::string_view s) {
    for (char c : s)
        if (!is_ws(c)) return false;
    return true;
}

int word_count(std::string_view s) {
    int n = 0;
    bool in_word = false;
    for (char c : s) {
        if (is_ws(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

bool is_name_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

// Splits "<name>" / "</name>" at `pos`. Returns the name and whether it was a
// closing form; leaves `end` one past the '>'. A '<' that is not followed by
// this exact shape is ordinary text.
bool scan_markup(std::string_view s, size_t pos, std::string_view& name, bool& closing,
                 size_t& end) {
    size_t i = pos;
    if (i >= s.size() || s[i] != '<') return false;
    ++i;
    closing = i < s.size() && s[i] == '/';
    if (closing) ++i;
    size_t name_begin = i;
    while (i < s.size() && is_name_char(s[i])) ++i;
    if (i == name_begin || i >= s.size() || s[i] != '>') return false;
    name = s.substr(name_begin, i - name_begin);
    end = i + 1;
    return true;
}

// Canonical loc number: plain decimal, no leading zeros, value 0..500.
// Returns -1 when the spelling is not canonical and -2 when it is a loc
// spelling but the value is out of range.
int parse_loc_name(std::string_view name) {
    constexpr std::string_view prefix = "loc_";
    if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix) return -1;
    std::string_view digits = name.substr(prefix.size());
    if (digits.size() > 1 && digits[0] == '0') return -1;
    int value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return -1;
    return value > kLocGridMax ? -2 : value;
}

std::optional<OtslCellKind> cell_from_name(std::string_view name) {
    for (size_t i = 0; i < kCellNames.size(); ++i)
        if (kCellNames[i] == name) return static_cast<OtslCellKind>(i);
    return std::nullopt;
}

enum class TokKind { open, close, loc, cell, layout_open, layout_close, text, end };

struct Tok {
    TokKind kind = TokKind::end;
    size_t offset = 0;
    LayoutTag tag = LayoutTag::text;
    int loc = 0;
    OtslCellKind cell = OtslCellKind::fcel;
    std::string text;

    Tok() = default;
    Tok(TokKind k, size_t off) : kind(k), offset(off) {}
};

class Lexer {
  public:
    explicit Lexer(std::string_view s) : s_(s) {}

    Tok next() {
        if (pos_ >= s_.size()) return {TokKind::end, pos_};
        std::string_view name;
        bool closing = false;
        size_t end = 0;
        if (scan_markup(s_, pos_, name, closing, end)) return markup_token(name, closing, end);
        // text run: everything up to the next markup-shaped '<'
        size_t begin = pos_;
        while (pos_ < s_.size()) {
            if (s_[pos_] == '<' && scan_markup(s_, pos_, name, closing, end)) break;
            ++pos_;
        }
        Tok t{TokKind::text, begin};
        t.text = std::string(s_.substr(begin, pos_ - begin));
        return t;
    }

  private:
    Tok markup_token(std::string_view name, bool closing, size_t end) {
        size_t begin = pos_;
        pos_ = end;
        if (name == "layout") return {closing ? TokKind::layout_close : TokKind::layout_open, begin};
        if (name.substr(0, 4) == "loc_") {
            int loc = parse_loc_name(name);
            if (closing)
                throw ParseError(ParseErrorKind::malformed_loc, begin,
                                 "closing form is not valid for location tokens");
            if (loc == -2)
                throw ParseError(ParseErrorKind::loc_out_of_range, begin,
                                 "location index exceeds " + std::to_string(kLocGridMax));
            if (loc == -1)
                throw ParseError(ParseErrorKind::malformed_loc, begin,
                                 "location index must be a plain decimal: " + std::string(name));
            Tok t{TokKind::loc, begin};
            t.loc = loc;
            return t;
        }
        if (auto cell = cell_from_name(name)) {
            if (closing)
                throw ParseError(ParseErrorKind::unknown_tag, begin,
                                 "closing form is not valid for table tokens: " + std::string(name));
            Tok t{TokKind::cell, begin};
            t.cell = *cell;
            return t;
        }
        if (auto tag = tag_from_name(name)) {
            Tok t{closing ? TokKind::close : TokKind::open, begin};
            t.tag = *tag;
            return t;
        }
        throw ParseError(ParseErrorKind::unknown_tag, begin, std::string(name));
    }

    std::string_view s_;
    size_t pos_ = 0;
};

constexpr int kMaxDepth = 200;

class Parser {
  public:
    explicit Parser(std::string_view s) : lexer_(s) { advance(); }

    DocTagsDoc parse_document() {
        DocTagsDoc doc;
        if (cur_.kind == TokKind::layout_open) {
            doc.layout_wrapped = true;
            advance();
        }
        while (true) {
            switch (cur_.kind) {
            case TokKind::text: {
                if (!all_ws(cur_.text))
                    throw ParseError(ParseErrorKind::stray_content, cur_.offset,
                                     "text outside any element");
                doc.gaps.back() += cur_.text;
                advance();
                break;
            }
            case TokKind::open: {
                doc.elements.push_back(parse_element(1));
                doc.gaps.emplace_back();
                break;
            }
            case TokKind::layout_close: {
                if (!doc.layout_wrapped)
                    throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                     "</layout> without matching <layout>");
                advance();
                if (cur_.kind == TokKind::text && all_ws(cur_.text)) {
                    doc.trailing = cur_.text;
                    advance();
                }
                if (cur_.kind != TokKind::end)
                    throw ParseError(ParseErrorKind::stray_content, cur_.offset,
                                     "input continues after </layout>");
                return doc;
            }
            case TokKind::end: {
                if (doc.layout_wrapped)
                    throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                     "<layout> is never closed");
                return doc;
            }
            case TokKind::close:
                throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                 "close tag without matching open: " +
                                     std::string(tag_name(cur_.tag)));
            case TokKind::loc:
                throw ParseError(ParseErrorKind::malformed_loc, cur_.offset,
                                 "location token outside an element");
            case TokKind::cell:
                throw ParseError(ParseErrorKind::malformed_otsl, cur_.offset,
                                 "table token outside <otsl>");
            case TokKind::layout_open:
                throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                 "nested <layout> wrapper");
            }
        }
    }

  private:
    void advance() { cur_ = lexer_.next(); }

    DocElement parse_element(int depth) {
        if (depth > kMaxDepth)
            throw ParseError(ParseErrorKind::depth_exceeded, cur_.offset,
                             "nesting exceeds depth " + std::to_string(kMaxDepth));
        assert(cur_.kind == TokKind::open);
        DocElement el;
        el.tag = cur_.tag;
        size_t open_offset = cur_.offset;
        advance();
        parse_locs(el);
        if (cur_.kind == TokKind::text) {
            el.content = cur_.text;
            advance();
        }
        if (el.tag == LayoutTag::otsl) {
            parse_cells(el, open_offset);
            return el;
        }
        while (true) {
            switch (cur_.kind) {
            case TokKind::open: {
                el.children.push_back(parse_element(depth + 1));
                el.child_gaps.emplace_back();
                break;
            }
            case TokKind::text: {
                if (el.children.empty() || !all_ws(cur_.text))
                    throw ParseError(ParseErrorKind::stray_content, cur_.offset,
                                     "text between child elements must be whitespace");
                el.child_gaps.back() += cur_.text;
                advance();
                break;
            }
            case TokKind::close: {
                if (cur_.tag != el.tag)
                    throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                     "expected </" + std::string(tag_name(el.tag)) + "> but found </" +
                                         std::string(tag_name(cur_.tag)) + ">");
                advance();
                return el;
            }
            case TokKind::loc:
                throw ParseError(ParseErrorKind::malformed_loc, cur_.offset,
                                 "location tokens must directly follow the open tag");
            case TokKind::cell:
                throw ParseError(ParseErrorKind::malformed_otsl, cur_.offset,
                                 "table token outside <otsl>");
            case TokKind::layout_open:
            case TokKind::layout_close:
                throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                 "<layout> wrapper inside an element");
            case TokKind::end:
                throw ParseError(ParseErrorKind::unbalanced_tag, open_offset,
                                 "<" + std::string(tag_name(el.tag)) + "> is never closed");
            }
        }
    }

    void parse_locs(DocElement& el) {
        if (cur_.kind != TokKind::loc) return;
        size_t first_offset = cur_.offset;
        int values[4];
        int n = 0;
        while (cur_.kind == TokKind::loc) {
            if (n == 4)
                throw ParseError(ParseErrorKind::malformed_loc, cur_.offset,
                                 "more than 4 consecutive location tokens");
            values[n++] = cur_.loc;
            advance();
        }
        if (n != 4)
            throw ParseError(ParseErrorKind::malformed_loc, first_offset,
                             "expected 4 location tokens, found " + std::to_string(n));
        if (values[0] > values[2] || values[1] > values[3])
            throw ParseError(ParseErrorKind::malformed_loc, first_offset,
                             "box corners out of order");
        el.locs = LocBox{values[0], values[1], values[2], values[3]};
    }

    void parse_cells(DocElement& el, size_t open_offset) {
        while (true) {
            switch (cur_.kind) {
            case TokKind::cell: {
                OtslCell cell;
                cell.kind = cur_.cell;
                advance();
                if (cur_.kind == TokKind::text) {
                    if (cell.kind != OtslCellKind::fcel && !all_ws(cur_.text))
                        throw ParseError(ParseErrorKind::malformed_otsl, cur_.offset,
                                         "only <fcel> may carry text");
                    cell.text = cur_.text;
                    advance();
                }
                el.cells.push_back(std::move(cell));
                break;
            }
            case TokKind::close: {
                if (cur_.tag != LayoutTag::otsl)
                    throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                     "expected </otsl> but found </" +
                                         std::string(tag_name(cur_.tag)) + ">");
                advance();
                return;
            }
            case TokKind::open:
                throw ParseError(ParseErrorKind::malformed_otsl, cur_.offset,
                                 "nested element inside <otsl>");
            case TokKind::loc:
                throw ParseError(ParseErrorKind::malformed_loc, cur_.offset,
                                 "location tokens must directly follow the open tag");
            case TokKind::text:
                // unreachable: text runs are consumed right after each cell
                throw ParseError(ParseErrorKind::malformed_otsl, cur_.offset,
                                 "unexpected text inside <otsl>");
            case TokKind::layout_open:
            case TokKind::layout_close:
                throw ParseError(ParseErrorKind::unbalanced_tag, cur_.offset,
                                 "<layout> wrapper inside an element");
            case TokKind::end:
                throw ParseError(ParseErrorKind::unbalanced_tag, open_offset,
                                 "<otsl> is never closed");
            }
        }
    }

    Lexer lexer_;
    Tok cur_;
};

void serialize_element(const DocElement& el, std::string& out) {
    out += '<';
    out += tag_name(el.tag);
    out += '>';
    if (el.locs) {
        const LocBox& b = *el.locs;
        for (int v : {b.x_min, b.y_min, b.x_max, b.y_max}) {
            out += "<loc_";
            out += std::to_string(v);
            out += '>';
        }
    }
    out += el.content;
    for (const OtslCell& cell : el.cells) {
        out += '<';
        out += otsl_cell_name(cell.kind);
        out += '>';
        out += cell.text;
    }
    for (size_t i = 0; i < el.children.size(); ++i) {
        serialize_element(el.children[i], out);
        out += el.child_gaps[i];
    }
    out += "</";
    out += tag_name(el.tag);
    out += '>';
}

int element_tokens(const DocElement& el) {
    int n = 2; // open + close tag
    if (el.locs) n += 4;
    n += word_count(el.content);
    for (const OtslCell& cell : el.cells) n += 1 + word_count(cell.text);
    for (const DocElement& child : el.children) n += element_tokens(child);
    return n;
}

} // namespace

std::string_view tag_name(LayoutTag tag) {
    return kTagNames[static_cast<size_t>(tag)];
}

double loc_box_iou(const LocBox& a, const LocBox& b) {
    long long w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    long long h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    long long inter = w > 0 && h > 0 ? w * h : 0;
    long long area_a = static_cast<long long>(a.x_max - a.x_min) * (a.y_max - a.y_min);
    long long area_b = static_cast<long long>(b.x_max - b.x_min) * (b.y_max - b.y_min);
    long long uni = area_a + area_b - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::optional<LayoutTag> tag_from_name(std::string_view name) {
    for (size_t i = 0; i < kTagNames.size(); ++i)
        if (kTagNames[i] == name) return static_cast<LayoutTag>(i);
    return std::nullopt;
}

std::string_view otsl_cell_name(OtslCellKind kind) {
    return kCellNames[static_cast<size_t>(kind)];
}

std::string_view parse_error_kind_name(ParseErrorKind kind) {
    switch (kind) {
    case ParseErrorKind::unknown_tag: return "unknown_tag";
    case ParseErrorKind::malformed_loc: return "malformed_loc";
    case ParseErrorKind::loc_out_of_range: return "loc_out_of_range";
    case ParseErrorKind::unbalanced_tag: return "unbalanced_tag";
    case ParseErrorKind::stray_content: return "stray_content";
    case ParseErrorKind::malformed_otsl: return "malformed_otsl";
    case ParseErrorKind::depth_exceeded: return "depth_exceeded";
    }
    return "unknown";
}

ParseError::ParseError(ParseErrorKind kind, size_t offset, const std::string& detail)
    : std::runtime_error(std::string(parse_error_kind_name(kind)) + " at byte " +
                         std::to_string(offset) + ": " + detail),
      kind_(kind), offset_(offset) {}

DocTagsDoc parse(std::string_view input) {
    return Parser(input).parse_document();
}

std::string serialize(const DocTagsDoc& doc) {
    std::string out;
    if (doc.layout_wrapped) out += "<layout>";
    out += doc.gaps.empty() ? std::string() : doc.gaps[0];
    for (size_t i = 0; i < doc.elements.size(); ++i) {
        serialize_element(doc.elements[i], out);
        out += doc.gaps[i + 1];
    }
    if (doc.layout_wrapped) {
        out += "</layout>";
        out += doc.trailing;
    }
    return out;
}

std::string serialize(const DocElement& element) {
    std::string out;
    serialize_element(element, out);
    return out;
}

TokenClass classify_token(std::string_view token) {
    std::string_view name;
    bool closing = false;
    size_t end = 0;
    if (!scan_markup(token, 0, name, closing, end) || end != token.size())
        return TokenClass::content;
    if (name == "layout") return TokenClass::control;
    if (!closing) {
        int loc = parse_loc_name(name);
        if (loc >= 0) return TokenClass::loc;
        if (loc == -2) return TokenClass::content; // out-of-range index is not in the vocabulary
        if (cell_from_name(name)) return TokenClass::control;
    }
    if (tag_from_name(name)) return TokenClass::layout_tag;
    return TokenClass::content;
}

int count_tokens(std::string_view fragment) {
    return count_tokens(parse(fragment));
}

int count_tokens(const DocTagsDoc& doc) {
    int n = doc.layout_wrapped ? 2 : 0;
    for (const DocElement& el : doc.elements) n += element_tokens(el);
    return n;
}

} // namespace docpipe
