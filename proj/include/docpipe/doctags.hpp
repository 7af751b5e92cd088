#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Parser, serializer, and token utilities for the DocTags markup that the
// decoder emits and the layout prior is written in. The accepted language is
// deliberately strict: parse() either returns a document that serializes back
// to the exact input bytes, or throws ParseError with a byte offset.

namespace docpipe {

enum class LayoutTag {
    page_header,
    section_header,
    unordered_list,
    ordered_list,
    list_item,
    text,
    otsl,
    picture,
    page_break,
    formula,
    code,
    page_footer,
    caption,
    footnote,
    title,
    document_index,
    checkbox_selected,
    checkbox_unselected,
    form,
    key_value_region,
};

constexpr int kLayoutTagCount = 20;

// canonical tag name as it appears between angle brackets
std::string_view tag_name(LayoutTag tag);
std::optional<LayoutTag> tag_from_name(std::string_view name);

// Quantized box in the 0..500 location-token grid, stored in the order the
// tokens are printed: <loc_x_min><loc_y_min><loc_x_max><loc_y_max>.
struct LocBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    bool operator==(const LocBox&) const = default;
};

constexpr int kLocGridMax = 500;

double loc_box_iou(const LocBox& a, const LocBox& b);

enum class OtslCellKind { fcel, ecel, lcel, ucel, nl };

std::string_view otsl_cell_name(OtslCellKind kind);

// One table token plus whatever raw text followed it. Only fcel cells may
// carry non-whitespace text; for the rest the text is preserved purely so
// serialization can reproduce the input byte for byte.
struct OtslCell {
    OtslCellKind kind = OtslCellKind::fcel;
    std::string text;

    bool operator==(const OtslCell&) const = default;
};

struct DocElement {
    LayoutTag tag = LayoutTag::text;
    std::optional<LocBox> locs;
    std::string content;              // raw text between the locs and the first child
    std::vector<DocElement> children;
    std::vector<std::string> child_gaps; // whitespace run after child i, same length as children
    std::vector<OtslCell> cells;      // only populated when tag == otsl

    bool operator==(const DocElement&) const = default;
};

struct DocTagsDoc {
    std::vector<DocElement> elements;
    // whitespace between top-level elements; gaps[0] precedes the first
    // element and gaps[n] follows the last, so size is elements.size() + 1
    std::vector<std::string> gaps;
    bool layout_wrapped = false; // whole body enclosed in <layout>...</layout>
    std::string trailing;        // whitespace after </layout> when wrapped

    DocTagsDoc() : gaps(1) {}

    bool operator==(const DocTagsDoc&) const = default;
};

enum class ParseErrorKind {
    unknown_tag,
    malformed_loc,
    loc_out_of_range,
    unbalanced_tag,
    stray_content,
    malformed_otsl,
    depth_exceeded,
};

std::string_view parse_error_kind_name(ParseErrorKind kind);

class ParseError : public std::runtime_error {
  public:
    ParseError(ParseErrorKind kind, size_t offset, const std::string& detail);

    ParseErrorKind kind() const { return kind_; }
    size_t offset() const { return offset_; }

  private:
    ParseErrorKind kind_;
    size_t offset_;
};

DocTagsDoc parse(std::string_view input);
std::string serialize(const DocTagsDoc& doc);
std::string serialize(const DocElement& element);

enum class TokenClass { layout_tag, loc, control, content };

// Classifies a single token string. Total: anything that is not one of the
// known markup spellings (including out-of-range or zero-padded loc numbers)
// is content.
TokenClass classify_token(std::string_view token);

// Token count of a markup fragment: every tag, loc, and table token counts
// as 1 and text contributes its whitespace-separated word count. Throws
// ParseError when the fragment does not parse.
int count_tokens(std::string_view fragment);
int count_tokens(const DocTagsDoc& doc);

} // namespace docpipe
