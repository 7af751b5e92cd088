#include "docpipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace docpipe {

namespace {

bool is_ws(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

template <typename T> int levenshtein(const std::vector<T>& a, const std::vector<T>& b) {
    const size_t m = a.size(), n = b.size();
    if (m == 0) return static_cast<int>(n);
    if (n == 0) return static_cast<int>(m);
    std::vector<int> prev(n + 1), cur(n + 1);
    for (size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= n; ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

// clipped n-gram matches and total pred n-grams for one order
std::pair<long, long> ngram_matches(const std::vector<std::string>& pred,
                                    const std::vector<std::string>& ref, size_t n) {
    auto key = [n](const std::vector<std::string>& w, size_t i) {
        std::string k;
        for (size_t t = 0; t < n; ++t) {
            if (t) k += '\x1f';
            k += w[i + t];
        }
        return k;
    };
    std::map<std::string, long> ref_counts;
    if (ref.size() >= n)
        for (size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[key(ref, i)];
    long total = pred.size() >= n ? static_cast<long>(pred.size() - n + 1) : 0;
    long matched = 0;
    if (pred.size() >= n) {
        std::map<std::string, long> used;
        for (size_t i = 0; i + n <= pred.size(); ++i) {
            std::string k = key(pred, i);
            auto it = ref_counts.find(k);
            if (it != ref_counts.end() && used[k] < it->second) {
                ++used[k];
                ++matched;
            }
        }
    }
    return {matched, total};
}

// --- tree edit distance (postorder dynamic program over keyroots) ---

struct FlatTree {
    std::vector<std::string> labels; // 1-based postorder
    std::vector<int> lld;            // leftmost leaf descendant per node
    std::vector<int> keyroots;
};

int flatten_into(const TreeNode& node, FlatTree& flat) {
    int first_leaf = 0;
    for (size_t i = 0; i < node.children.size(); ++i) {
        int child_lld = flatten_into(node.children[i], flat);
        if (i == 0) first_leaf = child_lld;
    }
    flat.labels.push_back(node.label);
    int index = static_cast<int>(flat.labels.size()) - 1 + 1; // 1-based
    flat.lld.push_back(node.children.empty() ? index : first_leaf);
    return flat.lld.back();
}

FlatTree flatten(const TreeNode& root) {
    FlatTree flat;
    flat.labels.reserve(16);
    flatten_into(root, flat);
    // shift to 1-based storage
    flat.labels.insert(flat.labels.begin(), std::string());
    flat.lld.insert(flat.lld.begin(), 0);
    std::map<int, int> last_with_lld;
    for (int i = 1; i < static_cast<int>(flat.lld.size()); ++i) last_with_lld[flat.lld[i]] = i;
    for (auto [lld, i] : last_with_lld) flat.keyroots.push_back(i);
    std::sort(flat.keyroots.begin(), flat.keyroots.end());
    return flat;
}

// --- table grid reconstruction ---

struct GridCell {
    int row = 0;
    int col = 0;
    int rowspan = 1;
    int colspan = 1;
    bool empty_kind = false;
    std::string text;
};

struct Grid {
    std::vector<GridCell> cells;
    std::vector<std::vector<int>> occupancy; // cell index or -1 per grid slot
    int rows = 0;
};

int& slot(Grid& grid, int r, int c) {
    if (r >= static_cast<int>(grid.occupancy.size())) grid.occupancy.resize(r + 1);
    auto& row = grid.occupancy[static_cast<size_t>(r)];
    if (c >= static_cast<int>(row.size())) row.resize(c + 1, -1);
    return row[static_cast<size_t>(c)];
}

int slot_at(const Grid& grid, int r, int c) {
    if (r < 0 || r >= static_cast<int>(grid.occupancy.size())) return -1;
    const auto& row = grid.occupancy[static_cast<size_t>(r)];
    if (c < 0 || c >= static_cast<int>(row.size())) return -1;
    return row[static_cast<size_t>(c)];
}

Grid build_grid(const DocElement& table) {
    Grid grid;
    int r = 0, c = 0;
    for (const OtslCell& cell : table.cells) {
        switch (cell.kind) {
        case OtslCellKind::fcel:
        case OtslCellKind::ecel: {
            int idx = static_cast<int>(grid.cells.size());
            grid.cells.push_back({r, c, 1, 1, cell.kind == OtslCellKind::ecel, cell.text});
            slot(grid, r, c) = idx;
            ++c;
            break;
        }
        case OtslCellKind::lcel: {
            int owner = slot_at(grid, r, c - 1);
            if (owner < 0)
                throw ParseError(ParseErrorKind::malformed_otsl, 0,
                                 "left continuation with no cell to its left");
            slot(grid, r, c) = owner;
            if (grid.cells[owner].row == r)
                grid.cells[owner].colspan = c - grid.cells[owner].col + 1;
            ++c;
            break;
        }
        case OtslCellKind::ucel: {
            int owner = slot_at(grid, r - 1, c);
            if (owner < 0)
                throw ParseError(ParseErrorKind::malformed_otsl, 0,
                                 "upward continuation with no cell above");
            slot(grid, r, c) = owner;
            if (grid.cells[owner].col == c)
                grid.cells[owner].rowspan = r - grid.cells[owner].row + 1;
            ++c;
            break;
        }
        case OtslCellKind::nl:
            ++r;
            c = 0;
            break;
        }
    }
    grid.rows = c > 0 ? r + 1 : r;
    return grid;
}

std::string trimmed(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && is_ws(s[b])) ++b;
    while (e > b && is_ws(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

void flatten_element(const DocElement& el, std::vector<std::string>& lines) {
    if (el.tag == LayoutTag::otsl) {
        Grid grid = build_grid(el);
        for (int r = 0; r < grid.rows; ++r) {
            std::string line;
            bool any = false;
            for (const GridCell& cell : grid.cells) {
                if (cell.row != r) continue;
                if (any) line += " | ";
                line += trimmed(cell.text);
                any = true;
            }
            if (any) lines.push_back(std::move(line));
        }
    } else {
        std::string t = trimmed(el.content);
        if (!t.empty()) lines.push_back(std::move(t));
    }
    for (const DocElement& child : el.children) flatten_element(child, lines);
}

void collect_boxes(const DocElement& el,
                   std::vector<std::pair<LayoutTag, LocBox>>& out) {
    if (el.locs) out.emplace_back(el.tag, *el.locs);
    for (const DocElement& child : el.children) collect_boxes(child, out);
}

void collect_tables(const DocElement& el, std::vector<const DocElement*>& out) {
    if (el.tag == LayoutTag::otsl) out.push_back(&el);
    for (const DocElement& child : el.children) collect_tables(child, out);
}

std::vector<const DocElement*> tables_of(const DocTagsDoc& doc) {
    std::vector<const DocElement*> out;
    for (const DocElement& el : doc.elements) collect_tables(el, out);
    return out;
}

} // namespace

std::vector<uint32_t> decode_utf8(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        size_t extra;
        uint32_t acc;
        if (c < 0x80) {
            extra = 0;
            acc = c;
        } else if ((c & 0xe0) == 0xc0) {
            extra = 1;
            acc = c & 0x1fu;
        } else if ((c & 0xf0) == 0xe0) {
            extra = 2;
            acc = c & 0x0fu;
        } else if ((c & 0xf8) == 0xf0) {
            extra = 3;
            acc = c & 0x07u;
        } else {
            out.push_back(0x110000u + c); // invalid lead byte
            ++i;
            continue;
        }
        if (i + extra >= s.size()) { // continuation bytes run off the end
            out.push_back(0x110000u + c);
            ++i;
            continue;
        }
        bool ok = true;
        for (size_t k = 1; k <= extra; ++k) {
            unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xc0) != 0x80) {
                ok = false;
                break;
            }
            acc = (acc << 6) | (cc & 0x3fu);
        }
        if (!ok) {
            out.push_back(0x110000u + c);
            ++i;
            continue;
        }
        out.push_back(acc);
        i += extra + 1;
    }
    return out;
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_ws(s[i])) ++i;
        size_t b = i;
        while (i < s.size() && !is_ws(s[i])) ++i;
        if (i > b) out.emplace_back(s.substr(b, i - b));
    }
    return out;
}

double normalized_edit_distance(std::string_view a, std::string_view b) {
    std::vector<uint32_t> ca = decode_utf8(a), cb = decode_utf8(b);
    size_t longest = std::max(ca.size(), cb.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(ca, cb)) / static_cast<double>(longest);
}

Prf token_prf(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
    if (pred.empty() && ref.empty()) return {1.0, 1.0, 1.0};
    if (pred.empty() || ref.empty()) return {0.0, 0.0, 0.0};
    std::map<std::string, long> ref_counts;
    for (const std::string& t : ref) ++ref_counts[t];
    long overlap = 0;
    std::map<std::string, long> used;
    for (const std::string& t : pred) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && used[t] < it->second) {
            ++used[t];
            ++overlap;
        }
    }
    Prf prf;
    prf.precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
    prf.recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
    prf.f1 = prf.precision + prf.recall > 0
                 ? 2 * prf.precision * prf.recall / (prf.precision + prf.recall)
                 : 0.0;
    return prf;
}

double bleu4(const std::vector<std::string>& pred, const std::vector<std::string>& ref) {
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty()) return 0.0;
    double log_sum = 0;
    for (size_t n = 1; n <= 4; ++n) {
        auto [matched, total] = ngram_matches(pred, ref, n);
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else if (total == 0) {
            p = 1.0; // sequence shorter than n; nothing to score
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        log_sum += 0.25 * std::log(p);
    }
    double bp = pred.size() < ref.size()
                    ? std::exp(1.0 - static_cast<double>(ref.size()) /
                                         static_cast<double>(pred.size()))
                    : 1.0;
    return bp * std::exp(log_sum);
}

int tree_size(const TreeNode& node) {
    int n = 1;
    for (const TreeNode& child : node.children) n += tree_size(child);
    return n;
}

int tree_edit_distance(const TreeNode& a, const TreeNode& b) {
    FlatTree fa = flatten(a), fb = flatten(b);
    int na = static_cast<int>(fa.labels.size()) - 1;
    int nb = static_cast<int>(fb.labels.size()) - 1;
    std::vector<std::vector<int>> td(static_cast<size_t>(na + 1),
                                     std::vector<int>(static_cast<size_t>(nb + 1), 0));
    std::vector<std::vector<int>> fd;
    for (int i : fa.keyroots) {
        for (int j : fb.keyroots) {
            int li = fa.lld[static_cast<size_t>(i)], lj = fb.lld[static_cast<size_t>(j)];
            int rows = i - li + 2, cols = j - lj + 2;
            fd.assign(static_cast<size_t>(rows), std::vector<int>(static_cast<size_t>(cols), 0));
            for (int di = 1; di < rows; ++di) fd[di][0] = fd[di - 1][0] + 1;
            for (int dj = 1; dj < cols; ++dj) fd[0][dj] = fd[0][dj - 1] + 1;
            for (int di = 1; di < rows; ++di) {
                for (int dj = 1; dj < cols; ++dj) {
                    int ai = li + di - 1, bj = lj + dj - 1;
                    if (fa.lld[static_cast<size_t>(ai)] == li &&
                        fb.lld[static_cast<size_t>(bj)] == lj) {
                        int relabel = fa.labels[static_cast<size_t>(ai)] ==
                                              fb.labels[static_cast<size_t>(bj)]
                                          ? 0
                                          : 1;
                        fd[di][dj] = std::min({fd[di - 1][dj] + 1, fd[di][dj - 1] + 1,
                                               fd[di - 1][dj - 1] + relabel});
                        td[static_cast<size_t>(ai)][static_cast<size_t>(bj)] = fd[di][dj];
                    } else {
                        int pi = fa.lld[static_cast<size_t>(ai)] - li;
                        int pj = fb.lld[static_cast<size_t>(bj)] - lj;
                        fd[di][dj] = std::min(
                            {fd[di - 1][dj] + 1, fd[di][dj - 1] + 1,
                             fd[pi][pj] + td[static_cast<size_t>(ai)][static_cast<size_t>(bj)]});
                    }
                }
            }
        }
    }
    return td[static_cast<size_t>(na)][static_cast<size_t>(nb)];
}

TreeNode otsl_to_tree(const DocElement& table, bool structure_only) {
    if (table.tag != LayoutTag::otsl)
        throw std::invalid_argument("otsl_to_tree expects a table element");
    Grid grid = build_grid(table);
    TreeNode root{"table", {}};
    root.children.resize(static_cast<size_t>(grid.rows), TreeNode{"row", {}});
    for (const GridCell& cell : grid.cells) {
        std::string label = "cell|" + std::to_string(cell.colspan) + "|" +
                            std::to_string(cell.rowspan) + "|" + (cell.empty_kind ? "e" : "f");
        if (!structure_only && !cell.empty_kind) label += "|" + trimmed(cell.text);
        root.children[static_cast<size_t>(cell.row)].children.push_back(
            TreeNode{std::move(label), {}});
    }
    return root;
}

double teds(const DocElement& pred, const DocElement& ref, bool structure_only) {
    TreeNode tp = otsl_to_tree(pred, structure_only);
    TreeNode tr = otsl_to_tree(ref, structure_only);
    int larger = std::max(tree_size(tp), tree_size(tr));
    if (larger == 0) return 1.0;
    double d = tree_edit_distance(tp, tr);
    return 1.0 - d / static_cast<double>(larger);
}

double reading_order_ed(const DocTagsDoc& pred, const DocTagsDoc& ref) {
    std::vector<std::pair<LayoutTag, LocBox>> pred_boxes, ref_boxes;
    for (const DocElement& el : pred.elements) collect_boxes(el, pred_boxes);
    for (const DocElement& el : ref.elements) collect_boxes(el, ref_boxes);
    if (pred_boxes.empty() && ref_boxes.empty()) return 0.0;
    std::vector<bool> taken(ref_boxes.size(), false);
    std::vector<long long> matched_order;
    long long unmatched_symbol = static_cast<long long>(ref_boxes.size());
    for (const auto& [tag, box] : pred_boxes) {
        int best = -1;
        double best_iou = 0.5;
        for (size_t j = 0; j < ref_boxes.size(); ++j) {
            if (taken[j] || ref_boxes[j].first != tag) continue;
            double v = loc_box_iou(box, ref_boxes[j].second);
            if (v > best_iou || (best < 0 && v == best_iou)) {
                best = static_cast<int>(j);
                best_iou = v;
            }
        }
        if (best >= 0) {
            taken[static_cast<size_t>(best)] = true;
            matched_order.push_back(best);
        } else {
            matched_order.push_back(unmatched_symbol++);
        }
    }
    std::vector<long long> identity(ref_boxes.size());
    for (size_t j = 0; j < identity.size(); ++j) identity[j] = static_cast<long long>(j);
    size_t longest = std::max(matched_order.size(), identity.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(matched_order, identity)) /
           static_cast<double>(longest);
}

std::string flatten_text(const DocTagsDoc& doc) {
    std::vector<std::string> lines;
    for (const DocElement& el : doc.elements) flatten_element(el, lines);
    std::string out;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        out += lines[i];
    }
    return out;
}

PageMetrics evaluate_page(const PagePair& pair) {
    PageMetrics m;
    m.page_id = pair.page_id;
    std::string pred_text = flatten_text(pair.pred);
    std::string ref_text = flatten_text(pair.ref);
    std::vector<std::string> pred_words = split_words(pred_text);
    std::vector<std::string> ref_words = split_words(ref_text);
    m.bleu = bleu4(pred_words, ref_words);
    Prf prf = token_prf(pred_words, ref_words);
    m.precision = prf.precision;
    m.recall = prf.recall;
    m.f1 = prf.f1;
    m.edit_dist = normalized_edit_distance(pred_text, ref_text);
    std::vector<const DocElement*> pred_tables = tables_of(pair.pred);
    std::vector<const DocElement*> ref_tables = tables_of(pair.ref);
    if (!ref_tables.empty()) {
        DocElement empty_table;
        empty_table.tag = LayoutTag::otsl;
        size_t pairs = std::max(pred_tables.size(), ref_tables.size());
        double sum = 0, sum_s = 0;
        for (size_t i = 0; i < pairs; ++i) {
            const DocElement& p = i < pred_tables.size() ? *pred_tables[i] : empty_table;
            const DocElement& r = i < ref_tables.size() ? *ref_tables[i] : empty_table;
            sum += teds(p, r, false);
            sum_s += teds(p, r, true);
        }
        m.teds = sum / static_cast<double>(pairs);
        m.teds_s = sum_s / static_cast<double>(pairs);
    }
    m.reading_order = reading_order_ed(pair.pred, pair.ref);
    return m;
}

MetricReport evaluate_corpus(std::vector<PagePair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("corpus evaluation needs at least one page");
    std::sort(pairs.begin(), pairs.end(),
              [](const PagePair& a, const PagePair& b) { return a.page_id < b.page_id; });
    MetricReport report;
    report.pages = static_cast<int>(pairs.size());
    double teds_sum = 0, teds_s_sum = 0;
    int teds_pages = 0;
    for (const PagePair& pair : pairs) {
        PageMetrics m = evaluate_page(pair);
        report.bleu += m.bleu;
        report.precision += m.precision;
        report.recall += m.recall;
        report.f1 += m.f1;
        report.edit_dist += m.edit_dist;
        report.reading_order += m.reading_order;
        if (m.teds) {
            teds_sum += *m.teds;
            teds_s_sum += *m.teds_s;
            ++teds_pages;
        }
        report.per_page.push_back(std::move(m));
    }
    double n = report.pages;
    report.bleu /= n;
    report.precision /= n;
    report.recall /= n;
    report.f1 /= n;
    report.edit_dist /= n;
    report.reading_order /= n;
    if (teds_pages) {
        report.teds = teds_sum / teds_pages;
        report.teds_s = teds_s_sum / teds_pages;
    }
    return report;
}

} // namespace docpipe
