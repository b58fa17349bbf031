#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>

#include "dxrag/text.hpp"

namespace dxrag {

/// Disease-match predicate shared by rewards and metrics. Symmetric.
struct DiseaseMatcher {
    enum class Mode { normalized_exact, token_f1 };

    Mode mode = Mode::normalized_exact;
    double threshold = 0.6;  // token_f1 only

    bool matches(std::string_view a, std::string_view b) const {
        if (mode == Mode::normalized_exact) {
            std::string na = normalize_loose(a);
            return !na.empty() && na == normalize_loose(b);
        }
        std::set<std::string> ta = token_set(a);
        std::set<std::string> tb = token_set(b);
        if (ta.empty() || tb.empty()) return false;
        std::size_t common = 0;
        for (const auto& t : ta) common += tb.count(t);
        double f1 = 2.0 * static_cast<double>(common) /
                    static_cast<double>(ta.size() + tb.size());
        return f1 >= threshold;
    }

    template <typename Range>
    bool matches_any(std::string_view candidate, const Range& references) const {
        return std::any_of(references.begin(), references.end(),
                           [&](const auto& ref) { return matches(candidate, ref); });
    }
};

}  // namespace dxrag
