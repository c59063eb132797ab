#include "e2w/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace e2w::parser {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
    return out;
}

void skip_ws(std::string_view s, std::size_t& pos) {
    while (pos < s.size() && is_space(s[pos])) ++pos;
}

bool parse_double(std::string_view s, std::size_t& pos, double& out) {
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), out);
    if (res.ec != std::errc{} || !std::isfinite(out)) return false;
    pos = static_cast<std::size_t>(res.ptr - s.data());
    return true;
}

bool parse_int(std::string_view s, std::size_t& pos, long long& out) {
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), out);
    if (res.ec != std::errc{}) return false;
    pos = static_cast<std::size_t>(res.ptr - s.data());
    return true;
}

// Attempt a "[a, b, c, d]" tuple with `pos` just past the '['. On success
// pos lands past the ']'.
bool parse_box_tuple(std::string_view s, std::size_t& pos, double vals[4]) {
    std::size_t p = pos;
    for (int k = 0; k < 4; ++k) {
        skip_ws(s, p);
        if (!parse_double(s, p, vals[k])) return false;
        skip_ws(s, p);
        if (k < 3) {
            if (p >= s.size() || s[p] != ',') return false;
            ++p;
        }
    }
    if (p >= s.size() || s[p] != ']') return false;
    pos = p + 1;
    return true;
}

std::vector<geometry::BoundingBox2D> extract_boxes(std::string_view think) {
    std::vector<geometry::BoundingBox2D> boxes;
    std::size_t pos = 0;
    while (pos < think.size()) {
        if (think[pos] != '[') {
            ++pos;
            continue;
        }
        std::size_t after = pos + 1;
        double vals[4];
        if (!parse_box_tuple(think, after, vals)) {
            ++pos;
            continue;
        }
        pos = after;
        geometry::BoundingBox2D box{vals[0], vals[1], vals[2], vals[3]};
        if (!box.valid()) continue;
        if (std::find(boxes.begin(), boxes.end(), box) == boxes.end()) boxes.push_back(box);
    }
    return boxes;
}

std::optional<long long> extract_overlap(std::string_view text) {
    const std::string lower = to_lower(text);
    struct Pattern {
        const char* keyword;
        char separator;
    };
    static constexpr Pattern kPatterns[] = {{"overlap number", '='}, {"overlap_count", ':'}};

    std::size_t best_pos = std::string::npos;
    long long best_value = 0;
    for (const auto& pat : kPatterns) {
        std::size_t from = 0;
        while (true) {
            std::size_t at = lower.find(pat.keyword, from);
            if (at == std::string::npos) break;
            std::size_t p = at + std::string_view(pat.keyword).size();
            skip_ws(lower, p);
            if (p < lower.size() && lower[p] == pat.separator) {
                ++p;
                skip_ws(lower, p);
                long long value;
                if (parse_int(lower, p, value) && at < best_pos) {
                    best_pos = at;
                    best_value = value;
                }
            }
            from = at + 1;
        }
    }
    if (best_pos == std::string::npos) return std::nullopt;
    return best_value;
}

// Complete \boxed{...} occurrences (brace-balanced); returns contents in order.
std::vector<std::string> extract_boxed(std::string_view text) {
    static constexpr std::string_view kTag = "\\boxed{";
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t at = text.find(kTag, pos);
        if (at == std::string_view::npos) break;
        std::size_t p = at + kTag.size();
        int depth = 1;
        std::size_t start = p;
        while (p < text.size() && depth > 0) {
            if (text[p] == '{') ++depth;
            else if (text[p] == '}') --depth;
            ++p;
        }
        if (depth == 0) {
            out.emplace_back(text.substr(start, p - 1 - start));
            pos = p;
        } else {
            pos = at + kTag.size();
        }
    }
    return out;
}

std::optional<long long> parse_count_answer(std::string_view raw) {
    std::size_t pos = 0;
    skip_ws(raw, pos);
    long long value;
    if (!parse_int(raw, pos, value)) return std::nullopt;
    skip_ws(raw, pos);
    if (pos != raw.size()) return std::nullopt;
    return value;
}

std::optional<GraspAnswer> parse_grasp_answer(std::string_view raw) {
    std::size_t pos = 0;
    skip_ws(raw, pos);
    long long view;
    if (!parse_int(raw, pos, view)) return std::nullopt;
    skip_ws(raw, pos);
    if (pos >= raw.size() || raw[pos] != ',') return std::nullopt;
    ++pos;
    skip_ws(raw, pos);
    if (pos >= raw.size() || raw[pos] != '[') return std::nullopt;
    ++pos;
    double u, v;
    skip_ws(raw, pos);
    if (!parse_double(raw, pos, u)) return std::nullopt;
    skip_ws(raw, pos);
    if (pos >= raw.size() || raw[pos] != ',') return std::nullopt;
    ++pos;
    skip_ws(raw, pos);
    if (!parse_double(raw, pos, v)) return std::nullopt;
    skip_ws(raw, pos);
    if (pos >= raw.size() || raw[pos] != ']') return std::nullopt;
    ++pos;
    skip_ws(raw, pos);
    if (pos != raw.size()) return std::nullopt;
    if (view < 0 || view > 1000000) return std::nullopt;
    return GraspAnswer{static_cast<int>(view), u, v};
}

}  // namespace

std::string normalize_answer_text(std::string_view text) {
    std::string s = to_lower(text);
    auto is_strip_punct = [](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == '"' || c == '\'';
    };
    std::size_t lo = 0, hi = s.size();
    bool changed = true;
    while (changed) {
        changed = false;
        while (lo < hi && (is_space(s[lo]) || is_strip_punct(s[lo]))) {
            ++lo;
            changed = true;
        }
        while (hi > lo && (is_space(s[hi - 1]) || is_strip_punct(s[hi - 1]))) {
            --hi;
            changed = true;
        }
    }
    std::string out;
    out.reserve(hi - lo);
    bool in_ws = false;
    for (std::size_t i = lo; i < hi; ++i) {
        if (is_space(s[i])) {
            in_ws = true;
            continue;
        }
        if (in_ws) out.push_back(' ');
        in_ws = false;
        out.push_back(s[i]);
    }
    return out;
}

ParsedResponse parse_response(std::string_view text, TaskKind task) {
    ParsedResponse parsed;

    static constexpr std::string_view kOpen = "<think>";
    static constexpr std::string_view kClose = "</think>";
    const std::size_t open_at = text.find(kOpen);
    if (open_at != std::string_view::npos) {
        const std::size_t body = open_at + kOpen.size();
        const std::size_t close_at = text.find(kClose, body);
        if (close_at != std::string_view::npos) {
            parsed.think_text = std::string(text.substr(body, close_at - body));
            parsed.evidence_boxes = extract_boxes(*parsed.think_text);
        }
    }

    parsed.overlap_count = extract_overlap(text);

    const auto boxed = extract_boxed(text);
    if (!boxed.empty()) {
        parsed.boxed_raw = boxed.back();
        switch (task) {
            case TaskKind::Counting:
                if (auto count = parse_count_answer(*parsed.boxed_raw)) parsed.answer = *count;
                break;
            case TaskKind::Relation: {
                std::string norm = normalize_answer_text(*parsed.boxed_raw);
                if (!norm.empty()) parsed.answer = std::move(norm);
                break;
            }
            case TaskKind::Grasp:
                if (auto grasp = parse_grasp_answer(*parsed.boxed_raw)) parsed.answer = *grasp;
                break;
        }
    }

    parsed.format_ok = parsed.think_text.has_value() && boxed.size() == 1 && parsed.has_answer();
    return parsed;
}

int check_format(const ParsedResponse& parsed) { return parsed.format_ok ? 1 : 0; }

}  // namespace e2w::parser
