#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "e2w/geometry.hpp"
#include "e2w/task.hpp"

namespace e2w::parser {

struct GraspAnswer {
    int view = 0;
    double u = 0.0, v = 0.0;

    friend bool operator==(const GraspAnswer& a, const GraspAnswer& b) {
        return a.view == b.view && a.u == b.u && a.v == b.v;
    }
};

// Count, normalized relation text, or grasp tuple.
using Answer = std::variant<std::monostate, long long, std::string, GraspAnswer>;

// Structured decomposition of a raw model response. All fields degrade to
// absent on malformed input; parsing never fails.
struct ParsedResponse {
    std::optional<std::string> think_text;
    // Distinct numeric 4-tuples from inside the think segment, in order of
    // first appearance. Tuples violating box invariants are skipped.
    std::vector<geometry::BoundingBox2D> evidence_boxes;
    std::optional<long long> overlap_count;
    std::optional<std::string> boxed_raw;  // content of the last \boxed{...}
    Answer answer;
    // True iff the think segment is present, exactly one \boxed{} appears,
    // and the boxed content parses under the task kind.
    bool format_ok = false;

    bool has_answer() const { return !std::holds_alternative<std::monostate>(answer); }
};

ParsedResponse parse_response(std::string_view text, TaskKind task);

// R_format: 1 iff format_ok.
int check_format(const ParsedResponse& parsed);

// Lowercase, trim, strip surrounding .,!?"' and collapse internal whitespace.
std::string normalize_answer_text(std::string_view text);

}  // namespace e2w::parser
